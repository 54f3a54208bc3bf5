#include "anchorworld/simkit.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace anchorworld::sim {

namespace {

constexpr double kFrameDt = 0.5;  // seconds per scripted frame
constexpr int kScenarioVersion = 1;

Eigen::Vector3d lerp(const Eigen::Vector3d& a, const Eigen::Vector3d& b, double s) {
  return a + s * (b - a);
}

// Incrementally scripts a scenario; attached objects follow their host with
// a constant offset, so motion consistency holds by construction.
class Timeline {
 public:
  explicit Timeline(std::string name) { scenario_.name = std::move(name); }

  void add_object(const std::string& id, const std::string& category,
                  std::vector<double> hist, const Eigen::Vector3d& size,
                  const Eigen::Vector3d& position, bool visible = true) {
    scenario_.objects.push_back({id, category, std::move(hist), size});
    State s;
    s.pose.position = position;
    s.pose.visible = visible;
    states_[id] = s;
  }

  void move_to(const std::string& id, const Eigen::Vector3d& position) {
    state(id).pose.position = position;
  }

  void hide(const std::string& id) { state(id).pose.visible = false; }
  void show(const std::string& id) { state(id).pose.visible = true; }

  void attach(const std::string& id, const std::string& host) {
    State& s = state(id);
    s.pose.attached_to = host;
    s.offset = s.pose.position - state(host).pose.position;
  }

  void detach(const std::string& id) { state(id).pose.attached_to.reset(); }

  // Appends one frame at the current poses.
  void commit() {
    ScenarioFrame frame;
    frame.t = static_cast<double>(scenario_.frames.size()) * kFrameDt;
    // resolve attached objects against their host's current position
    for (auto& [id, s] : states_) {
      if (s.pose.attached_to)
        s.pose.position = states_.at(*s.pose.attached_to).pose.position + s.offset;
    }
    for (const auto& [id, s] : states_) frame.objects[id] = s.pose;
    scenario_.frames.push_back(std::move(frame));
  }

  void hold(int frames) {
    for (int i = 0; i < frames; ++i) commit();
  }

  // Straight-line move committed over `steps` frames (end position inclusive).
  void glide(const std::string& id, const Eigen::Vector3d& target, int steps) {
    const Eigen::Vector3d start = state(id).pose.position;
    for (int k = 1; k <= steps; ++k) {
      move_to(id, lerp(start, target, double(k) / steps));
      commit();
    }
  }

  // Swaps two objects' positions over `steps` frames, arcing them apart in y
  // so they never come closer than twice the arc amplitude.
  void swap(const std::string& a, const std::string& b, int steps, double arc = 0.16) {
    const Eigen::Vector3d pa = state(a).pose.position;
    const Eigen::Vector3d pb = state(b).pose.position;
    for (int k = 1; k <= steps; ++k) {
      const double s = double(k) / steps;
      const double bump = arc * std::sin(M_PI * s);
      Eigen::Vector3d qa = lerp(pa, pb, s);
      Eigen::Vector3d qb = lerp(pb, pa, s);
      qa[1] += bump;
      qb[1] -= bump;
      move_to(a, qa);
      move_to(b, qb);
      commit();
    }
  }

  Scenario finish() {
    scenario_.validate();
    return scenario_;
  }

 private:
  struct State {
    FramePose pose;
    Eigen::Vector3d offset = Eigen::Vector3d::Zero();
  };

  State& state(const std::string& id) {
    auto it = states_.find(id);
    if (it == states_.end()) throw std::logic_error("timeline: unknown object " + id);
    return it->second;
  }

  Scenario scenario_;
  std::map<std::string, State> states_;
};

Scenario make_simple_occlusion() {
  Timeline tl("simple-occlusion");
  tl.add_object("cup", "cup", make_color_histogram(10, 11, 9), {0.09, 0.09, 0.12},
                {0.0, 0.0, 0.06});
  tl.add_object("box", "box", make_color_histogram(5, 12, 8), {0.12, 0.08, 0.08},
                {0.6, 0.4, 0.04});
  tl.add_object("ball", "ball", make_color_histogram(0, 12, 10), {0.05, 0.05, 0.05},
                {0.45, 0.0, 0.03});
  tl.hold(6);
  tl.glide("ball", {0.12, 0.0, 0.03}, 6);
  tl.hold(3);
  tl.hide("ball");
  tl.attach("ball", "cup");
  tl.hold(8);
  tl.detach("ball");
  tl.show("ball");
  tl.hold(5);
  return tl.finish();
}

Scenario make_moving_occluded() {
  Timeline tl("moving-occluded");
  tl.add_object("cup", "cup", make_color_histogram(10, 11, 9), {0.09, 0.09, 0.12},
                {0.0, 0.0, 0.06});
  tl.add_object("box", "box", make_color_histogram(5, 12, 8), {0.12, 0.08, 0.08},
                {0.6, 0.4, 0.04});
  tl.add_object("ball", "ball", make_color_histogram(0, 12, 10), {0.05, 0.05, 0.05},
                {0.45, 0.0, 0.03});
  tl.hold(5);
  tl.glide("ball", {0.10, 0.0, 0.03}, 6);
  tl.hold(2);
  tl.hide("ball");
  tl.attach("ball", "cup");
  tl.commit();
  tl.glide("cup", {0.7, 0.45, 0.06}, 10);  // carries the hidden ball along
  tl.hold(2);
  tl.detach("ball");
  tl.show("ball");
  tl.hold(5);
  return tl.finish();
}

Scenario make_unexpected_reveal() {
  Timeline tl("unexpected-reveal");
  tl.add_object("glove", "glove", make_color_histogram(1, 6, 12), {0.20, 0.12, 0.05},
                {0.5, 0.3, 0.03});
  tl.add_object("ball1", "ball", make_color_histogram(0, 12, 10), {0.05, 0.05, 0.05},
                {0.10, 0.0, 0.03});
  // a second, differently colored ball rides in the glove from the start
  tl.add_object("ball2", "ball", make_color_histogram(10, 11, 9), {0.05, 0.05, 0.05},
                {0.52, 0.33, 0.04}, /*visible=*/false);
  tl.attach("ball2", "glove");
  tl.hold(5);
  tl.glide("glove", {0.13, 0.03, 0.03}, 5);
  tl.hold(2);
  tl.hide("ball1");
  tl.attach("ball1", "glove");
  tl.commit();
  tl.glide("glove", {0.7, 0.1, 0.03}, 7);
  tl.detach("ball2");
  tl.show("ball2");
  tl.commit();
  tl.glide("glove", {0.95, 0.35, 0.03}, 4);
  tl.detach("ball1");
  tl.show("ball1");
  tl.hold(5);
  return tl.finish();
}

Scenario make_shell_game() {
  Timeline tl("shell-game");
  const auto container_hist = make_color_histogram(12, 10, 7);
  const Eigen::Vector3d container_size{0.09, 0.09, 0.11};
  tl.add_object("c1", "block", container_hist, container_size, {-0.35, 0.0, 0.055});
  tl.add_object("c2", "block", container_hist, container_size, {0.0, 0.0, 0.055});
  tl.add_object("c3", "block", container_hist, container_size, {0.35, 0.0, 0.055});
  tl.add_object("ball", "block", make_color_histogram(3, 13, 11), {0.04, 0.04, 0.04},
                {0.0, 0.3, 0.02});
  tl.hold(4);
  tl.glide("ball", {0.0, 0.09, 0.02}, 5);
  tl.hold(2);
  tl.hide("ball");
  tl.attach("ball", "c2");
  tl.commit();
  tl.swap("c2", "c3", 7);
  tl.hold(2);
  tl.swap("c1", "c3", 7);
  tl.hold(2);
  tl.swap("c1", "c2", 7);
  tl.hold(2);
  tl.swap("c2", "c3", 7);
  tl.hold(2);
  tl.detach("ball");
  tl.show("ball");
  tl.hold(4);
  return tl.finish();
}

// Dataset-only scenario: an object leaves the scene for good and an
// identical twin shows up elsewhere later. Its percept-versus-stale-anchor
// pairs are the negatives that teach the matcher to reject distant,
// long-unseen candidates.
Scenario make_twin_return() {
  Timeline tl("twin-return");
  tl.add_object("cup", "cup", make_color_histogram(10, 11, 9), {0.09, 0.09, 0.12},
                {0.5, 0.5, 0.06});
  tl.add_object("ballA", "ball", make_color_histogram(0, 12, 10), {0.05, 0.05, 0.05},
                {0.15, 0.0, 0.03});
  tl.add_object("ballB", "ball", make_color_histogram(0, 12, 10), {0.05, 0.05, 0.05},
                {0.9, 0.6, 0.03}, /*visible=*/false);
  tl.hold(8);
  tl.hide("ballA");
  tl.glide("ballA", {1.4, 1.1, 0.03}, 5);  // drifts out of the scene, unseen
  tl.show("ballB");
  tl.hold(5);
  tl.glide("ballB", {1.2, 0.9, 0.03}, 5);
  tl.hold(2);
  tl.glide("ballB", {0.5, 0.3, 0.03}, 5);
  tl.hold(3);
  return tl.finish();
}

}  // namespace

std::vector<double> make_color_histogram(int hue_peak, int sat_peak, int val_peak) {
  const int bins_per_channel = percept::kColorHistBins / 3;
  const std::array<std::pair<int, double>, 3> channels{
      std::pair{hue_peak, 0.6}, std::pair{sat_peak, 0.2}, std::pair{val_peak, 0.2}};
  std::vector<double> hist(percept::kColorHistBins, 0.0);
  for (int c = 0; c < 3; ++c) {
    const auto [peak, weight] = channels[c];
    if (peak < 0 || peak >= bins_per_channel)
      throw std::invalid_argument("histogram peak outside channel range");
    double channel_sum = 0.0;
    std::vector<double> bump(bins_per_channel);
    for (int i = 0; i < bins_per_channel; ++i) {
      bump[i] = std::exp(-0.5 * (i - peak) * (i - peak) / (1.2 * 1.2)) + 0.01;
      channel_sum += bump[i];
    }
    for (int i = 0; i < bins_per_channel; ++i)
      hist[c * bins_per_channel + i] = weight * bump[i] / channel_sum;
  }
  const double total = std::accumulate(hist.begin(), hist.end(), 0.0);
  for (double& v : hist) v /= total;
  return hist;
}

void Scenario::validate() const {
  if (objects.empty()) throw std::invalid_argument("scenario: no objects");
  std::map<std::string, const ObjectSpec*> by_id;
  for (const auto& obj : objects) {
    if (obj.id.empty() || obj.category.empty())
      throw std::invalid_argument("scenario: object needs id and category");
    if (!by_id.emplace(obj.id, &obj).second)
      throw std::invalid_argument("scenario: duplicate object id " + obj.id);
    double sum = std::accumulate(obj.color_hist.begin(), obj.color_hist.end(), 0.0);
    if (obj.color_hist.size() < 2 || std::abs(sum - 1.0) > 1e-9)
      throw std::invalid_argument("scenario: histogram of " + obj.id + " not normalized");
    for (int i = 0; i < 3; ++i)
      if (!(obj.size_box[i] > 0.0))
        throw std::invalid_argument("scenario: degenerate box for " + obj.id);
  }
  double prev_t = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < frames.size(); ++k) {
    const auto& frame = frames[k];
    if (!(frame.t > prev_t))
      throw std::invalid_argument("scenario: frame times must strictly increase");
    prev_t = frame.t;
    if (frame.objects.size() != objects.size())
      throw std::invalid_argument("scenario: frame must pose every object");
    for (const auto& [id, pose] : frame.objects) {
      if (!by_id.contains(id))
        throw std::invalid_argument("scenario: frame poses unknown object " + id);
      if (pose.attached_to) {
        if (*pose.attached_to == id || !by_id.contains(*pose.attached_to))
          throw std::invalid_argument("scenario: bad attachment host for " + id);
        // constant offset while attached to the same host
        if (k > 0) {
          const auto& prev = frames[k - 1].objects.at(id);
          if (prev.attached_to == pose.attached_to) {
            const Eigen::Vector3d offset_now =
                pose.position - frame.objects.at(*pose.attached_to).position;
            const Eigen::Vector3d offset_prev =
                prev.position - frames[k - 1].objects.at(*pose.attached_to).position;
            if ((offset_now - offset_prev).norm() > 1e-9)
              throw std::invalid_argument("scenario: attached object " + id +
                                          " does not move rigidly with its host");
          }
        }
      }
    }
  }
}

nlohmann::json Scenario::to_json() const {
  nlohmann::json objs = nlohmann::json::array();
  for (const auto& o : objects) {
    objs.push_back({{"id", o.id},
                    {"category", o.category},
                    {"color_hist", o.color_hist},
                    {"size_box", {o.size_box[0], o.size_box[1], o.size_box[2]}}});
  }
  nlohmann::json frs = nlohmann::json::array();
  for (const auto& f : frames) {
    nlohmann::json poses = nlohmann::json::object();
    for (const auto& [id, pose] : f.objects) {
      nlohmann::json p{{"position", {pose.position[0], pose.position[1], pose.position[2]}},
                       {"visible", pose.visible}};
      p["attached_to"] = pose.attached_to ? nlohmann::json(*pose.attached_to)
                                          : nlohmann::json(nullptr);
      poses[id] = p;
    }
    frs.push_back({{"t", f.t}, {"objects", poses}});
  }
  return nlohmann::json{{"version", kScenarioVersion},
                        {"name", name},
                        {"objects", objs},
                        {"frames", frs},
                        {"noise",
                         {{"sigma_pos", noise.sigma_pos},
                          {"sigma_size_frac", noise.sigma_size_frac},
                          {"hist_concentration", noise.hist_concentration},
                          {"confidence_min", noise.confidence_min},
                          {"confidence_max", noise.confidence_max},
                          {"label_error_rate", noise.label_error_rate},
                          {"sigma_track", noise.sigma_track}}}};
}

Scenario Scenario::from_json(const nlohmann::json& j) {
  if (j.value("version", kScenarioVersion) != kScenarioVersion)
    throw std::runtime_error("scenario version mismatch");
  Scenario s;
  s.name = j.at("name").get<std::string>();
  for (const auto& o : j.at("objects")) {
    ObjectSpec spec;
    spec.id = o.at("id").get<std::string>();
    spec.category = o.at("category").get<std::string>();
    spec.color_hist = o.at("color_hist").get<std::vector<double>>();
    for (int i = 0; i < 3; ++i) spec.size_box[i] = o.at("size_box").at(i).get<double>();
    s.objects.push_back(std::move(spec));
  }
  for (const auto& f : j.at("frames")) {
    ScenarioFrame frame;
    frame.t = f.at("t").get<double>();
    for (const auto& [id, p] : f.at("objects").items()) {
      FramePose pose;
      for (int i = 0; i < 3; ++i) pose.position[i] = p.at("position").at(i).get<double>();
      pose.visible = p.at("visible").get<bool>();
      if (p.contains("attached_to") && !p.at("attached_to").is_null())
        pose.attached_to = p.at("attached_to").get<std::string>();
      frame.objects[id] = pose;
    }
    s.frames.push_back(std::move(frame));
  }
  if (j.contains("noise")) {
    const auto& n = j.at("noise");
    s.noise.sigma_pos = n.value("sigma_pos", s.noise.sigma_pos);
    s.noise.sigma_size_frac = n.value("sigma_size_frac", s.noise.sigma_size_frac);
    s.noise.hist_concentration = n.value("hist_concentration", s.noise.hist_concentration);
    s.noise.confidence_min = n.value("confidence_min", s.noise.confidence_min);
    s.noise.confidence_max = n.value("confidence_max", s.noise.confidence_max);
    s.noise.label_error_rate = n.value("label_error_rate", s.noise.label_error_rate);
    s.noise.sigma_track = n.value("sigma_track", s.noise.sigma_track);
  }
  s.validate();
  return s;
}

Scenario Scenario::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open scenario file: " + path);
  nlohmann::json j;
  in >> j;
  return from_json(j);
}

std::pair<std::vector<percept::Percept>, GroundTruthSlice> generate_frame(
    const Scenario& scenario, std::size_t frame_index, Rng& rng) {
  if (frame_index >= scenario.frames.size())
    throw std::invalid_argument("frame index out of range");
  const ScenarioFrame& frame = scenario.frames[frame_index];
  const NoiseSpec& noise = scenario.noise;
  std::vector<percept::Percept> percepts;
  GroundTruthSlice truth;
  for (const auto& spec : scenario.objects) {  // declaration order
    const FramePose& pose = frame.objects.at(spec.id);
    if (!pose.visible) {
      truth.hidden_positions[spec.id] = pose.position;
      if (pose.attached_to) truth.hidden_hosts[spec.id] = *pose.attached_to;
      continue;
    }
    percept::Percept p;
    p.category = spec.category;
    if (noise.label_error_rate > 0.0 && rng.uniform01() < noise.label_error_rate) {
      // wrong-label injection: borrow another object's category when possible
      for (const auto& other : scenario.objects) {
        if (other.category != spec.category) {
          p.category = other.category;
          break;
        }
      }
    }
    p.confidence = rng.uniform(noise.confidence_min, noise.confidence_max);
    if (noise.hist_concentration > 0.0) {
      std::vector<double> alpha(spec.color_hist.size());
      for (std::size_t i = 0; i < alpha.size(); ++i)
        alpha[i] = noise.hist_concentration * spec.color_hist[i];
      p.color_hist = rng.dirichlet(alpha);
    } else {
      p.color_hist = spec.color_hist;
    }
    for (int i = 0; i < 3; ++i) {
      p.size_box[i] = spec.size_box[i] *
                      (noise.sigma_size_frac > 0.0
                           ? std::exp(noise.sigma_size_frac * rng.normal())
                           : 1.0);
      p.position[i] = pose.position[i] +
                      (noise.sigma_pos > 0.0 ? noise.sigma_pos * rng.normal() : 0.0);
    }
    p.timestamp = frame.t;
    percepts.push_back(std::move(p));
    truth.percept_true_ids.push_back(spec.id);
  }
  return {std::move(percepts), std::move(truth)};
}

std::vector<Scenario> builtin_scenarios() {
  std::vector<Scenario> out;
  out.push_back(make_simple_occlusion());
  out.push_back(make_moving_occluded());
  out.push_back(make_unexpected_reveal());
  out.push_back(make_shell_game());
  return out;
}

std::vector<Scenario> dataset_scenarios() {
  auto out = builtin_scenarios();
  out.push_back(make_twin_return());
  return out;
}

const Scenario* find_scenario(const std::vector<Scenario>& scenarios, const std::string& name) {
  for (const auto& s : scenarios)
    if (s.name == name) return &s;
  return nullptr;
}

Scenario resolve_scenario(const std::string& name_or_path) {
  const auto all = dataset_scenarios();
  if (const Scenario* found = find_scenario(all, name_or_path)) return *found;
  return Scenario::load(name_or_path);
}

std::vector<matcher::LabeledSample> generate_matcher_dataset(
    const std::vector<Scenario>& scenarios, std::uint64_t seed, int n_target,
    DatasetStats* stats) {
  if (n_target < 10) throw std::invalid_argument("dataset target too small");
  if (scenarios.empty()) throw std::invalid_argument("no scenarios given");
  std::vector<matcher::LabeledSample> samples;
  int positives = 0;
  for (std::uint64_t pass = 0; static_cast<int>(samples.size()) < n_target; ++pass) {
    for (std::size_t s = 0; s < scenarios.size(); ++s) {
      const Scenario& scenario = scenarios[s];
      // ground-truth anchors: latest percept per object, with an ideal
      // tracker feeding true positions while hidden
      std::map<std::string, store::Anchor> anchors;
      for (std::size_t k = 0; k < scenario.frames.size(); ++k) {
        Rng rng(derive_seed(seed, pass * scenarios.size() + s, k));
        auto [percepts, truth] = generate_frame(scenario, k, rng);
        // Hidden anchors carry their true position plus tracker-scale error,
        // matching what the live feedback loop would have written back.
        for (auto& [id, anchor] : anchors) {
          auto hidden = truth.hidden_positions.find(id);
          if (hidden != truth.hidden_positions.end()) {
            Eigen::Vector3d tracked = hidden->second;
            for (int d = 0; d < 3; ++d)
              tracked[d] += scenario.noise.sigma_track * rng.normal();
            anchor.attributes.position = tracked;
          }
        }
        const double t = scenario.frames[k].t;
        for (std::size_t i = 0; i < percepts.size(); ++i) {
          for (const auto& [id, anchor] : anchors) {
            matcher::LabeledSample sample;
            sample.features = matcher::build_similarity_vector(percepts[i], anchor, t);
            sample.label = (truth.percept_true_ids[i] == id) ? 1 : 0;
            positives += sample.label;
            samples.push_back(sample);
          }
        }
        for (std::size_t i = 0; i < percepts.size(); ++i) {
          store::Anchor& anchor = anchors[truth.percept_true_ids[i]];
          anchor.id = truth.percept_true_ids[i];
          anchor.attributes = percepts[i];
          anchor.last_observed = t;
        }
      }
    }
  }
  if (static_cast<int>(samples.size()) > n_target) {
    for (int i = n_target; i < static_cast<int>(samples.size()); ++i)
      positives -= samples[i].label;
    samples.resize(n_target);
  }
  if (stats) {
    stats->n_samples = static_cast<int>(samples.size());
    stats->positive_fraction = double(positives) / double(samples.size());
  }
  return samples;
}

nlohmann::json MetricsReport::to_json() const {
  nlohmann::json j{{"matcher_accuracy", matcher_accuracy},
                   {"matcher_f1", matcher_f1},
                   {"id_switches", id_switches},
                   {"acquire_count", acquire_count},
                   {"pass", pass}};
  j["occluded_rmse"] =
      std::isnan(occluded_rmse) ? nlohmann::json(nullptr) : nlohmann::json(occluded_rmse);
  j["final_attachment_correct"] = final_attachment_correct
                                      ? nlohmann::json(*final_attachment_correct)
                                      : nlohmann::json(nullptr);
  return j;
}

MetricsReport evaluate(const RunTrace& trace, const Scenario& scenario,
                       const std::vector<GroundTruthSlice>& ground_truth) {
  if (trace.frames.size() != ground_truth.size())
    throw std::invalid_argument("trace and ground truth length mismatch");
  MetricsReport report;

  // anchor id of each true object's most recent appearance
  std::map<std::string, std::string> current_anchor;
  double sq_error_sum = 0.0;
  int rmse_count = 0;
  for (std::size_t k = 0; k < trace.frames.size(); ++k) {
    const auto& frame = trace.frames[k];
    const auto& truth = ground_truth[k];
    for (std::size_t i = 0; i < frame.percept_anchor_ids.size(); ++i) {
      const std::string& true_id = frame.percept_true_ids[i];
      const std::string& anchor_id = frame.percept_anchor_ids[i];
      auto it = current_anchor.find(true_id);
      if (it != current_anchor.end() && it->second != anchor_id) ++report.id_switches;
      current_anchor[true_id] = anchor_id;
      if (frame.acquired[i]) ++report.acquire_count;
    }
    for (const auto& [true_id, true_pos] : truth.hidden_positions) {
      auto anchor_it = current_anchor.find(true_id);
      if (anchor_it == current_anchor.end()) continue;  // never seen yet
      auto est_it = frame.tracked_estimates.find(anchor_it->second);
      if (est_it == frame.tracked_estimates.end()) continue;
      sq_error_sum += (est_it->second - true_pos).squaredNorm();
      ++rmse_count;
    }
  }
  if (rmse_count > 0) report.occluded_rmse = std::sqrt(sq_error_sum / rmse_count);

  // anchor id of a true object's most recent appearance at or before a frame
  auto anchor_at = [&](const std::string& true_id,
                       std::size_t up_to) -> std::optional<std::string> {
    for (std::size_t k = up_to + 1; k-- > 0;) {
      const auto& f = trace.frames[k];
      for (std::size_t i = 0; i < f.percept_true_ids.size(); ++i)
        if (f.percept_true_ids[i] == true_id) return f.percept_anchor_ids[i];
    }
    return std::nullopt;
  };

  // hidden-host identification at the last frame before the reveal
  for (std::size_t k = trace.frames.size(); k-- > 0;) {
    const auto& truth = ground_truth[k];
    if (truth.hidden_hosts.empty()) continue;
    const auto& [true_id, host_true_id] = *truth.hidden_hosts.begin();
    const auto anchor_id = anchor_at(true_id, k);
    const auto host_anchor_id = anchor_at(host_true_id, k);
    if (!anchor_id || !host_anchor_id) break;
    auto detail_it = trace.frames[k].tracked_details.find(*anchor_id);
    if (detail_it == trace.frames[k].tracked_details.end()) break;
    std::string argmax;
    double best = 0.0;
    for (const auto& [host, mass] : detail_it->second.attachment) {
      if (mass > best) {
        best = mass;
        argmax = host;
      }
    }
    report.final_attachment_correct = (argmax == *host_anchor_id);
    break;
  }

  report.pass = report.id_switches == 0;
  return report;
}

RunResult run_scenario(const Scenario& scenario, const matcher::MatchModel& model,
                       const loop::WorldConfig& config, std::uint64_t seed,
                       std::ostream* trace_out) {
  scenario.validate();
  RunResult result;
  loop::World world(model, config, derive_seed(seed, 0x77));
  for (std::size_t k = 0; k < scenario.frames.size(); ++k) {
    Rng rng(derive_seed(seed, 0x99, k));
    auto [percepts, truth] = generate_frame(scenario, k, rng);
    loop::FrameInput input{scenario.frames[k].t, std::move(percepts)};
    const loop::FrameReport report = world.step(input);

    RunTrace::Frame frame;
    frame.t = input.t;
    frame.percept_true_ids = truth.percept_true_ids;
    frame.percept_anchor_ids = report.assigned_anchor_ids;
    for (const auto& d : report.decisions) frame.acquired.push_back(!d.reacquire);
    frame.tracked_estimates = report.tracked_updates;
    if (world.tracker()) {
      for (const auto& [id, pos] : report.tracked_updates)
        frame.tracked_details[id] = world.tracker()->estimate(id);
    }
    result.trace.frames.push_back(std::move(frame));
    result.ground_truth.push_back(std::move(truth));

    result.consonance_violations +=
        static_cast<int>(world.consonance_check().violations.size());
    if (trace_out) *trace_out << world.trace_record(input, report).dump() << "\n";
  }
  result.metrics = evaluate(result.trace, scenario, result.ground_truth);
  result.metrics.matcher_accuracy = model.metrics.accuracy;
  result.metrics.matcher_f1 = model.metrics.f1;
  return result;
}

}  // namespace anchorworld::sim
