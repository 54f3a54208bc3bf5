#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "anchorworld/matcher.hpp"
#include "anchorworld/rng.hpp"
#include "anchorworld/worldloop.hpp"

namespace anchorworld::sim {

struct ObjectSpec {
  std::string id;  // scenario-internal ground-truth id
  percept::CategoryLabel category;
  std::vector<double> color_hist;  // canonical appearance
  Eigen::Vector3d size_box = Eigen::Vector3d::Zero();
};

struct FramePose {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  bool visible = true;
  std::optional<std::string> attached_to;
};

struct ScenarioFrame {
  double t = 0.0;
  std::map<std::string, FramePose> objects;
};

struct NoiseSpec {
  double sigma_pos = 0.01;        // position noise [m]
  double sigma_size_frac = 0.05;  // multiplicative log-normal extent jitter
  double hist_concentration = 200.0;  // Dirichlet jitter concentration
  double confidence_min = 0.6;
  double confidence_max = 0.99;
  double label_error_rate = 0.0;  // probability of a wrong category label
  double sigma_track = 0.05;      // tracked-position error emulated in dataset replay [m]
};

/// Scripted ground-truth world driving synthetic percept generation.
struct Scenario {
  std::string name;
  std::vector<ObjectSpec> objects;
  std::vector<ScenarioFrame> frames;
  NoiseSpec noise;

  void validate() const;  // throws std::invalid_argument on inconsistency
  nlohmann::json to_json() const;
  static Scenario from_json(const nlohmann::json& j);
  static Scenario load(const std::string& path);
};

/// Per-frame truth: which percept belongs to which object, and where the
/// invisible objects really are.
struct GroundTruthSlice {
  std::vector<std::string> percept_true_ids;  // aligned with the emitted percepts
  std::map<std::string, Eigen::Vector3d> hidden_positions;
  std::map<std::string, std::string> hidden_hosts;  // attached_to, when set
};

// One percept per visible object, with the scenario's noise applied.
std::pair<std::vector<percept::Percept>, GroundTruthSlice> generate_frame(
    const Scenario& scenario, std::size_t frame_index, Rng& rng);

// A peaked, normalized 48-bin histogram (16 bins per HSV channel).
std::vector<double> make_color_histogram(int hue_peak, int sat_peak, int val_peak);

// The four occlusion scenarios: simple-occlusion, moving-occluded,
// unexpected-reveal, shell-game.
std::vector<Scenario> builtin_scenarios();

// Builtins plus the dataset-only twin-return scenario, whose
// disappear-and-reappear ambiguity supplies the matcher's hard negatives.
std::vector<Scenario> dataset_scenarios();

const Scenario* find_scenario(const std::vector<Scenario>& scenarios, const std::string& name);

// Scenario name, or a path to a scenario JSON file.
Scenario resolve_scenario(const std::string& name_or_path);

struct DatasetStats {
  int n_samples = 0;
  double positive_fraction = 0.0;
};

// Replays the scenarios against ground-truth anchors (hidden anchors carry
// their true position, as an ideal tracker would) and emits one positive per
// (percept, own anchor) continuation plus negatives against every other
// in-frame anchor, until n_target samples exist.
std::vector<matcher::LabeledSample> generate_matcher_dataset(
    const std::vector<Scenario>& scenarios, std::uint64_t seed, int n_target,
    DatasetStats* stats = nullptr);

struct RunTrace {
  struct Frame {
    double t = 0.0;
    std::vector<std::string> percept_true_ids;
    std::vector<std::string> percept_anchor_ids;
    std::vector<bool> acquired;
    std::map<std::string, Eigen::Vector3d> tracked_estimates;
    std::map<std::string, rpf::Estimate> tracked_details;
  };
  std::vector<Frame> frames;
};

struct MetricsReport {
  double matcher_accuracy = 0.0;
  double matcher_f1 = 0.0;
  int id_switches = 0;
  int acquire_count = 0;
  double occluded_rmse = std::numeric_limits<double>::quiet_NaN();
  std::optional<bool> final_attachment_correct;  // hidden-host argmax, when applicable
  bool pass = false;

  nlohmann::json to_json() const;
};

// Id switches, acquire count and occluded-position RMSE from a finished run.
MetricsReport evaluate(const RunTrace& trace, const Scenario& scenario,
                       const std::vector<GroundTruthSlice>& ground_truth);

struct RunResult {
  RunTrace trace;
  std::vector<GroundTruthSlice> ground_truth;
  MetricsReport metrics;
  int consonance_violations = 0;
};

// Drives the world loop over a scenario; optionally streams per-frame JSONL
// trace records.
RunResult run_scenario(const Scenario& scenario, const matcher::MatchModel& model,
                       const loop::WorldConfig& config, std::uint64_t seed,
                       std::ostream* trace_out = nullptr);

}  // namespace anchorworld::sim
