#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "anchorworld/anchorstore.hpp"
#include "anchorworld/percepts.hpp"

namespace anchorworld::matcher {

/// The five commensurable match features, in fixed order.
struct SimilarityVector {
  double d_class = 0.0;
  double d_color = 0.0;
  double d_pos = 0.0;
  double d_size = 0.0;
  double d_time = 0.0;

  std::array<double, 5> as_array() const { return {d_class, d_color, d_pos, d_size, d_time}; }
};

struct LabeledSample {
  SimilarityVector features;
  int label = 0;  // 1 = match, 0 = no match
};

enum class Algorithm { kKnn, kBayes, kLogistic };

Algorithm algorithm_from_name(const std::string& name);
std::string_view algorithm_name(Algorithm algorithm);

struct TrainMetrics {
  double accuracy = 0.0;
  double f1 = 0.0;  // for the positive (match) label
  int n_train = 0;
  int n_test = 0;
};

struct GaussianClassStats {
  double log_prior = 0.0;
  std::array<double, 5> mean{};
  std::array<double, 5> variance{};
};

/// Immutable trained match classifier; scores similarity vectors in [0,1].
struct MatchModel {
  Algorithm algorithm = Algorithm::kLogistic;
  int feature_count = 5;  // 5, or 4 to omit d_time

  // kNN
  int k = 3;
  std::vector<std::vector<double>> knn_points;
  std::vector<int> knn_labels;

  // Gaussian naive Bayes; index 0 = no-match class, 1 = match class
  std::array<GaussianClassStats, 2> bayes{};

  // Logistic regression; weights[feature_count] is the bias term
  std::vector<double> logistic_weights;

  TrainMetrics metrics;  // held-out metrics recorded at training time
};

struct TrainResult {
  MatchModel model;
  TrainMetrics metrics;
};

// Applies the five similarity measures component-wise between a candidate
// percept and a stored anchor. The anchor's position may be a tracked
// estimate written back by the world loop.
SimilarityVector build_similarity_vector(const percept::Percept& candidate,
                                         const store::Anchor& anchor, double t_now);

// 70/30 train/test split (deterministic in split_seed), fits the requested
// algorithm and reports hold-out accuracy and match-F1.
// Throws "degenerate training set" when a label class is missing.
TrainResult train(const std::vector<LabeledSample>& samples, Algorithm algorithm,
                  int feature_count, std::uint64_t split_seed);

// Match score in [0,1]; pure function of (model, features).
double predict(const MatchModel& model, const SimilarityVector& features);
double predict_raw(const MatchModel& model, std::span<const double> features);

struct Decision {
  bool reacquire = false;
  std::string anchor_id;  // set when reacquire
  double score = 0.0;
};

/// One decision per percept; each anchor appears at most once per frame.
struct AssociationResult {
  std::vector<Decision> decisions;
};

// Winner-takes-all data association: scores every (percept, anchor) pair and
// greedily accepts in descending score order, skipping consumed percepts or
// anchors and scores below the threshold. Ties break on smaller time gap,
// then anchor id, then percept index.
AssociationResult associate(std::span<const percept::Percept> percepts,
                            const std::vector<const store::Anchor*>& anchors,
                            const MatchModel& model, double threshold, double t_now);

// Dataset CSV: header "d_class,d_color,d_pos,d_size,d_time,label", one sample
// per line, 17-significant-digit floats. Loading reports malformed rows with
// their line number.
std::vector<LabeledSample> load_dataset(const std::filesystem::path& path);
void save_dataset(const std::filesystem::path& path, std::span<const LabeledSample> samples);

// Versioned JSON model record.
void save_model(const std::filesystem::path& path, const MatchModel& model);
MatchModel load_model(const std::filesystem::path& path);
nlohmann::json model_to_json(const MatchModel& model);
MatchModel model_from_json(const nlohmann::json& j);

}  // namespace anchorworld::matcher
