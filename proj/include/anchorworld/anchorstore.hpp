#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "anchorworld/percepts.hpp"

namespace anchorworld::store {

enum class AnchorStatus { kObserved, kTracked, kLost };

std::string_view status_name(AnchorStatus status);

/// Persistent record tying a unique symbol to the latest perceptual
/// representation of one physical object.
struct Anchor {
  std::string id;                 // "<category>-<counter>"
  percept::Percept attributes;    // most recent percept (position may be a tracked estimate)
  double last_observed = 0.0;     // time of the last matching percept
  double last_feed = 0.0;         // time of the last percept or track update
  AnchorStatus status = AnchorStatus::kObserved;
  int history_len = 0;            // count of attribute updates
};

/// The permanent world model: remembers every object that has appeared.
class AnchorStore {
 public:
  // Creates a new anchor for an unmatched percept and returns its id.
  std::string acquire(const percept::Percept& percept, double t);

  // Extends a matching anchor to time t, replacing its attributes with the
  // new percept's. Throws on unknown id or time regression.
  void re_acquire(const std::string& id, const percept::Percept& percept, double t);

  // Extends an unobserved anchor with a position estimate from the temporary
  // world model; only the position attribute changes. Throws on unknown id.
  void track(const std::string& id, const Eigen::Vector3d& position_estimate, double t);

  // Tracked anchors that received neither percept nor track feed for longer
  // than max_track_age become lost (but stay in the store).
  void apply_lost_policy(double t_now, double max_track_age);

  const Anchor* find(const std::string& id) const;
  const Anchor& at(const std::string& id) const;
  std::size_t size() const { return anchors_.size(); }
  bool empty() const { return anchors_.empty(); }

  // Anchors in ascending id order.
  std::vector<const Anchor*> anchors() const;

  double last_frame_time() const { return last_frame_time_; }
  void set_last_frame_time(double t) { last_frame_time_ = t; }

  nlohmann::json to_json() const;
  static AnchorStore from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static AnchorStore restore(const std::filesystem::path& path);

 private:
  Anchor& require(const std::string& id);

  std::map<std::string, Anchor> anchors_;
  std::map<std::string, int> counters_;  // per-category; never reused
  double last_frame_time_ = 0.0;
};

}  // namespace anchorworld::store
