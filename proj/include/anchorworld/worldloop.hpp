#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "anchorworld/anchorstore.hpp"
#include "anchorworld/matcher.hpp"
#include "anchorworld/rpf.hpp"

namespace anchorworld::loop {

struct FrameInput {
  double t = 0.0;
  std::vector<percept::Percept> percepts;
};

struct OcclusionEvent {
  std::string type;       // "attach_proposed" | "detached"
  std::string anchor_id;
  std::vector<std::string> hosts;  // candidate host anchors (attach_proposed)
};

struct FrameReport {
  std::vector<matcher::Decision> decisions;      // one per percept
  std::vector<std::string> assigned_anchor_ids;  // one per percept, post acquire/re-acquire
  std::map<std::string, Eigen::Vector3d> tracked_updates;
  std::vector<OcclusionEvent> occlusion_events;
  double ess = 0.0;
};

struct WorldConfig {
  double threshold = 0.5;
  bool tracker_enabled = true;
  double max_track_age = 30.0;  // seconds without percept or feed before tracked -> lost
  rpf::TrackerConfig tracker;
};

struct ConsonanceViolation {
  std::string anchor_id;
  std::string detail;
};

struct ConsonanceReport {
  std::vector<ConsonanceViolation> violations;
  bool ok() const { return violations.empty(); }
};

/// Binds the permanent world model (anchor store) and the temporary world
/// model (particle ensemble) in a per-frame feedback loop.
class World {
 public:
  World(matcher::MatchModel model, WorldConfig config, std::uint64_t seed);

  // Runs one frame: association, acquire/re-acquire, tracker update,
  // occlusion handling and tracked-position write-back. A frame is atomic:
  // on error no partial mutation is visible.
  FrameReport step(const FrameInput& frame);

  // Verifies that both world models describe the same world: tracked anchors
  // carry the ensemble mean, observed anchors carry their matched percept's
  // position. Lost anchors are exempt.
  ConsonanceReport consonance_check() const;

  const store::AnchorStore& anchors() const { return anchors_; }
  store::AnchorStore& anchors_mutable() { return anchors_; }
  const rpf::Ensemble* tracker() const { return twm_ ? &*twm_ : nullptr; }
  const matcher::MatchModel& model() const { return model_; }
  const WorldConfig& config() const { return config_; }

  // Per-frame trace record (JSONL line) for the most recent step.
  nlohmann::json trace_record(const FrameInput& frame, const FrameReport& report) const;

 private:
  FrameReport run_frame(const FrameInput& frame);

  matcher::MatchModel model_;
  WorldConfig config_;
  std::uint64_t seed_;
  store::AnchorStore anchors_;
  std::optional<rpf::Ensemble> twm_;
  std::set<std::string> observed_last_frame_;
  std::map<std::string, Eigen::Vector3d> last_percept_position_;  // per observed anchor
  std::optional<double> last_frame_time_;
};

}  // namespace anchorworld::loop
