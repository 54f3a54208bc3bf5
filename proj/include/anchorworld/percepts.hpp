#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include "json.hpp"

namespace anchorworld::percept {

// Object category symbol from a finite configured vocabulary, e.g. "cup".
using CategoryLabel = std::string;

inline constexpr int kColorHistBins = 48;  // 16 bins per HSV channel, concatenated

/// One segmented observation of a physical object.
struct Percept {
  CategoryLabel category;
  double confidence = 0.0;                 // classifier confidence in [0,1]
  std::vector<double> color_hist;          // normalized, kColorHistBins entries
  Eigen::Vector3d size_box = Eigen::Vector3d::Zero();  // bounding-box extents [m]
  Eigen::Vector3d position = Eigen::Vector3d::Zero();  // geometric center [m]
  double timestamp = 0.0;                  // seconds
};

// Throws std::invalid_argument if any attribute violates its invariants.
void validate(const Percept& percept);

// Maps histogram-bin index to a color predicate symbol; must cover every bin.
using GroundingTable = std::vector<std::string>;

// Eq.-style pairwise similarity measures. All return values in [0,1] and are
// total over valid inputs except where an error is documented.

// Exponentially decaying relative L1-distance between class confidences;
// zero when the category symbols differ.
double class_similarity(const CategoryLabel& label_x, double confidence_x,
                        const CategoryLabel& label_y, double confidence_y);

// Pearson correlation of the two histograms mapped to [0,1].
// Throws on length mismatch; returns the neutral 0.5 when a histogram
// has (near-)zero variance.
double color_similarity(const std::vector<double>& hist_x, const std::vector<double>& hist_y);

// exp(-L2 distance) of the two positions.
double position_similarity(const Eigen::Vector3d& pos_x, const Eigen::Vector3d& pos_y);

// Generalized Jaccard similarity of the box extents. Throws on non-positive extents.
double size_similarity(const Eigen::Vector3d& size_x, const Eigen::Vector3d& size_y);

// 2 / (1 + e^k) with k = t_now - t_last. Throws if t_now < t_last.
double time_similarity(double t_now, double t_last);

// Predicate symbol of the dominant histogram bin; ties break to the lowest index.
const std::string& ground_color_predicate(const std::vector<double>& hist,
                                          const GroundingTable& table);

void to_json(nlohmann::json& j, const Percept& percept);
void from_json(const nlohmann::json& j, Percept& percept);

}  // namespace anchorworld::percept
