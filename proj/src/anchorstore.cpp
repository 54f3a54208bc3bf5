#include "anchorworld/anchorstore.hpp"

#include <fstream>
#include <stdexcept>

namespace anchorworld::store {

namespace {
constexpr int kSnapshotVersion = 1;

AnchorStatus status_from_name(const std::string& name) {
  if (name == "observed") return AnchorStatus::kObserved;
  if (name == "tracked") return AnchorStatus::kTracked;
  if (name == "lost") return AnchorStatus::kLost;
  throw std::runtime_error("unknown anchor status: " + name);
}
}  // namespace

std::string_view status_name(AnchorStatus status) {
  switch (status) {
    case AnchorStatus::kObserved: return "observed";
    case AnchorStatus::kTracked: return "tracked";
    case AnchorStatus::kLost: return "lost";
  }
  return "observed";
}

Anchor& AnchorStore::require(const std::string& id) {
  auto it = anchors_.find(id);
  if (it == anchors_.end()) throw std::invalid_argument("unknown anchor id: " + id);
  return it->second;
}

std::string AnchorStore::acquire(const percept::Percept& percept, double t) {
  percept::validate(percept);
  const int counter = ++counters_[percept.category];
  std::string id = percept.category + "-" + std::to_string(counter);
  Anchor anchor;
  anchor.id = id;
  anchor.attributes = percept;
  anchor.last_observed = t;
  anchor.last_feed = t;
  anchor.status = AnchorStatus::kObserved;
  anchor.history_len = 1;
  anchors_.emplace(id, std::move(anchor));
  return id;
}

void AnchorStore::re_acquire(const std::string& id, const percept::Percept& percept, double t) {
  percept::validate(percept);
  Anchor& anchor = require(id);
  if (t < anchor.last_observed)
    throw std::invalid_argument("re_acquire: time regression for anchor " + id);
  anchor.attributes = percept;
  anchor.last_observed = t;
  anchor.last_feed = t;
  anchor.status = AnchorStatus::kObserved;
  ++anchor.history_len;
}

void AnchorStore::track(const std::string& id, const Eigen::Vector3d& position_estimate,
                        double t) {
  Anchor& anchor = require(id);
  anchor.attributes.position = position_estimate;
  anchor.last_feed = t;
  anchor.status = AnchorStatus::kTracked;
  ++anchor.history_len;
}

void AnchorStore::apply_lost_policy(double t_now, double max_track_age) {
  for (auto& [id, anchor] : anchors_) {
    if (anchor.status == AnchorStatus::kTracked &&
        t_now - std::max(anchor.last_observed, anchor.last_feed) > max_track_age) {
      anchor.status = AnchorStatus::kLost;
    }
  }
}

const Anchor* AnchorStore::find(const std::string& id) const {
  auto it = anchors_.find(id);
  return it == anchors_.end() ? nullptr : &it->second;
}

const Anchor& AnchorStore::at(const std::string& id) const {
  auto it = anchors_.find(id);
  if (it == anchors_.end()) throw std::invalid_argument("unknown anchor id: " + id);
  return it->second;
}

std::vector<const Anchor*> AnchorStore::anchors() const {
  std::vector<const Anchor*> out;
  out.reserve(anchors_.size());
  for (const auto& [id, anchor] : anchors_) out.push_back(&anchor);
  return out;
}

nlohmann::json AnchorStore::to_json() const {
  nlohmann::json anchors = nlohmann::json::array();
  for (const auto& [id, anchor] : anchors_) {
    anchors.push_back({{"id", anchor.id},
                       {"status", std::string(status_name(anchor.status))},
                       {"last_observed", anchor.last_observed},
                       {"last_feed", anchor.last_feed},
                       {"history_len", anchor.history_len},
                       {"attributes", anchor.attributes}});
  }
  return nlohmann::json{{"version", kSnapshotVersion},
                        {"counters", counters_},
                        {"last_frame_time", last_frame_time_},
                        {"anchors", anchors}};
}

AnchorStore AnchorStore::from_json(const nlohmann::json& j) {
  if (j.at("version").get<int>() != kSnapshotVersion)
    throw std::runtime_error("anchor store snapshot version mismatch");
  AnchorStore store;
  store.counters_ = j.at("counters").get<std::map<std::string, int>>();
  store.last_frame_time_ = j.at("last_frame_time").get<double>();
  for (const auto& item : j.at("anchors")) {
    Anchor anchor;
    anchor.id = item.at("id").get<std::string>();
    anchor.status = status_from_name(item.at("status").get<std::string>());
    anchor.last_observed = item.at("last_observed").get<double>();
    anchor.last_feed = item.at("last_feed").get<double>();
    anchor.history_len = item.at("history_len").get<int>();
    anchor.attributes = item.at("attributes").get<percept::Percept>();
    store.anchors_.emplace(anchor.id, std::move(anchor));
  }
  return store;
}

void AnchorStore::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open snapshot file: " + path.string());
  out << to_json().dump(2) << "\n";
}

AnchorStore AnchorStore::restore(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open snapshot file: " + path.string());
  nlohmann::json j;
  in >> j;
  return from_json(j);
}

}  // namespace anchorworld::store
