#include "anchorworld/worldloop.hpp"

#include <algorithm>
#include <stdexcept>

namespace anchorworld::loop {

World::World(matcher::MatchModel model, WorldConfig config, std::uint64_t seed)
    : model_(std::move(model)), config_(std::move(config)), seed_(seed) {
  if (config_.tracker_enabled) twm_.emplace(config_.tracker, seed_);
}

FrameReport World::step(const FrameInput& frame) {
  // Stage the mutable state so a failing frame leaves the world untouched.
  store::AnchorStore saved_anchors = anchors_;
  std::optional<rpf::Ensemble> saved_twm = twm_;
  std::set<std::string> saved_observed = observed_last_frame_;
  std::map<std::string, Eigen::Vector3d> saved_positions = last_percept_position_;
  std::optional<double> saved_time = last_frame_time_;
  try {
    return run_frame(frame);
  } catch (...) {
    anchors_ = std::move(saved_anchors);
    twm_ = std::move(saved_twm);
    observed_last_frame_ = std::move(saved_observed);
    last_percept_position_ = std::move(saved_positions);
    last_frame_time_ = std::move(saved_time);
    throw;
  }
}

FrameReport World::run_frame(const FrameInput& frame) {
  if (last_frame_time_ && frame.t <= *last_frame_time_)
    throw std::invalid_argument("frame time must strictly increase");
  for (const auto& p : frame.percepts) percept::validate(p);

  FrameReport report;

  // (1)+(2) score all (percept, anchor) pairs and associate winner-takes-all;
  // tracked anchors contribute their fed-back ensemble position here.
  const auto anchor_ptrs = anchors_.anchors();
  auto association = matcher::associate(frame.percepts, anchor_ptrs, model_,
                                        config_.threshold, frame.t);
  report.decisions = association.decisions;

  // (3) acquire / re-acquire
  std::set<std::string> matched;
  std::map<std::string, store::AnchorStatus> status_before;
  for (const auto* a : anchor_ptrs) status_before[a->id] = a->status;
  std::vector<std::string> acquired;
  report.assigned_anchor_ids.resize(frame.percepts.size());
  std::map<std::string, Eigen::Vector3d> observations;  // anchor id -> percept position
  for (std::size_t i = 0; i < frame.percepts.size(); ++i) {
    const auto& decision = association.decisions[i];
    std::string id;
    if (decision.reacquire) {
      id = decision.anchor_id;
      anchors_.re_acquire(id, frame.percepts[i], frame.t);
    } else {
      id = anchors_.acquire(frame.percepts[i], frame.t);
      acquired.push_back(id);
    }
    report.assigned_anchor_ids[i] = id;
    matched.insert(id);
    observations[id] = frame.percepts[i].position;
  }

  if (config_.tracker_enabled) {
    // (4) register new objects, advance the ensemble, fold in observations
    for (const auto& id : acquired) twm_->init_object(id, observations.at(id));
    const double dt = last_frame_time_ ? frame.t - *last_frame_time_ : 0.0;
    if (dt > 0.0 && !twm_->object_ids().empty()) twm_->predict(dt);
    std::vector<std::string> unobserved;
    for (const auto& id : twm_->object_ids())
      if (!matched.contains(id)) unobserved.push_back(id);
    if (!twm_->object_ids().empty()) twm_->weight_and_resample(observations, unobserved);

    // (5) objects that vanished this frame hypothesize an attachment to a
    // nearby observed host
    for (const auto& id : observed_last_frame_) {
      if (matched.contains(id)) continue;
      const auto last_seen_it = last_percept_position_.find(id);
      if (last_seen_it == last_percept_position_.end()) continue;
      const Eigen::Vector3d& last_seen = last_seen_it->second;
      std::map<std::string, Eigen::Vector3d> hosts;
      for (const auto& [host_id, pos] : observations) {
        if ((pos - last_seen).norm() <= 2.0 * config_.tracker.attach_length_scale)
          hosts[host_id] = pos;
      }
      twm_->propose_attachments(id, hosts, last_seen);
      OcclusionEvent event;
      event.type = "attach_proposed";
      event.anchor_id = id;
      for (const auto& [host_id, pos] : hosts) event.hosts.push_back(host_id);
      report.occlusion_events.push_back(std::move(event));
    }

    // (6) a re-acquired anchor that was tracked has just been revealed
    for (const auto& id : matched) {
      auto it = status_before.find(id);
      if (it != status_before.end() && it->second == store::AnchorStatus::kTracked) {
        twm_->detach_on_reveal(id);
        report.occlusion_events.push_back({"detached", id, {}});
      }
    }

    // (7) feed tracked positions back into the permanent world model
    for (const auto& id : twm_->object_ids()) {
      if (matched.contains(id)) continue;
      const auto* anchor = anchors_.find(id);
      if (anchor == nullptr || anchor->status == store::AnchorStatus::kLost) continue;
      const auto est = twm_->estimate(id);
      anchors_.track(id, est.mean, frame.t);
      report.tracked_updates[id] = est.mean;
    }
    report.ess = twm_->effective_sample_size();
  }

  anchors_.apply_lost_policy(frame.t, config_.max_track_age);
  anchors_.set_last_frame_time(frame.t);

  observed_last_frame_ = matched;
  for (const auto& [id, pos] : observations) last_percept_position_[id] = pos;
  last_frame_time_ = frame.t;
  return report;
}

ConsonanceReport World::consonance_check() const {
  ConsonanceReport report;
  for (const auto* anchor : anchors_.anchors()) {
    switch (anchor->status) {
      case store::AnchorStatus::kLost:
        break;  // exempt
      case store::AnchorStatus::kTracked: {
        if (!twm_ || !twm_->has_object(anchor->id)) {
          report.violations.push_back({anchor->id, "tracked anchor missing from ensemble"});
          break;
        }
        const auto est = twm_->estimate(anchor->id);
        if (est.mean != anchor->attributes.position)
          report.violations.push_back({anchor->id, "tracked position diverges from ensemble"});
        break;
      }
      case store::AnchorStatus::kObserved: {
        auto it = last_percept_position_.find(anchor->id);
        if (it == last_percept_position_.end()) break;  // never matched yet
        if (it->second != anchor->attributes.position)
          report.violations.push_back({anchor->id, "observed position diverges from percept"});
        break;
      }
    }
  }
  return report;
}

nlohmann::json World::trace_record(const FrameInput& frame, const FrameReport& report) const {
  nlohmann::json decisions = nlohmann::json::array();
  for (std::size_t i = 0; i < report.decisions.size(); ++i) {
    decisions.push_back({{"percept", i},
                         {"action", report.decisions[i].reacquire ? "re_acquire" : "acquire"},
                         {"anchor", report.assigned_anchor_ids[i]},
                         {"score", report.decisions[i].score}});
  }
  nlohmann::json statuses = nlohmann::json::object();
  for (const auto* anchor : anchors_.anchors())
    statuses[anchor->id] = std::string(store::status_name(anchor->status));
  nlohmann::json estimates = nlohmann::json::object();
  if (twm_) {
    for (const auto& id : twm_->object_ids()) {
      const auto est = twm_->estimate(id);
      nlohmann::json attachment = nlohmann::json::object();
      for (const auto& [host, mass] : est.attachment) attachment[host] = mass;
      estimates[id] = {{"mean", {est.mean[0], est.mean[1], est.mean[2]}},
                       {"free", est.free_probability},
                       {"attachment", attachment}};
    }
  }
  nlohmann::json events = nlohmann::json::array();
  for (const auto& e : report.occlusion_events)
    events.push_back({{"type", e.type}, {"anchor", e.anchor_id}, {"hosts", e.hosts}});
  return nlohmann::json{{"t", frame.t},
                        {"decisions", decisions},
                        {"statuses", statuses},
                        {"estimates", estimates},
                        {"events", events},
                        {"ess", report.ess}};
}

}  // namespace anchorworld::loop
