#include "anchorworld/percepts.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace anchorworld::percept {

namespace {
constexpr double kHistSumTolerance = 1e-9;
constexpr double kDegenerateConfidenceSum = 1e-12;
constexpr double kDegenerateVariance = 1e-12;
}  // namespace

void validate(const Percept& percept) {
  if (percept.category.empty()) throw std::invalid_argument("percept: empty category label");
  if (!(percept.confidence >= 0.0 && percept.confidence <= 1.0))
    throw std::invalid_argument("percept: confidence outside [0,1]");
  if (percept.color_hist.size() < 2)
    throw std::invalid_argument("percept: color histogram too short");
  double sum = 0.0;
  for (double v : percept.color_hist) {
    if (v < 0.0) throw std::invalid_argument("percept: negative histogram bin");
    sum += v;
  }
  if (std::abs(sum - 1.0) > kHistSumTolerance)
    throw std::invalid_argument("percept: histogram not normalized");
  for (int i = 0; i < 3; ++i) {
    if (!(percept.size_box[i] > 0.0)) throw std::invalid_argument("percept: degenerate box");
    if (!std::isfinite(percept.position[i]))
      throw std::invalid_argument("percept: non-finite position");
  }
}

double class_similarity(const CategoryLabel& label_x, double confidence_x,
                        const CategoryLabel& label_y, double confidence_y) {
  if (label_x != label_y) return 0.0;
  const double sum = confidence_x + confidence_y;
  if (sum < kDegenerateConfidenceSum) return 1.0;  // limit of identical values
  return std::exp(-std::abs(confidence_x - confidence_y) / sum);
}

double color_similarity(const std::vector<double>& hist_x, const std::vector<double>& hist_y) {
  if (hist_x.size() != hist_y.size())
    throw std::invalid_argument("histogram dimension mismatch");
  const std::size_t n = hist_x.size();
  const double mean_x = std::accumulate(hist_x.begin(), hist_x.end(), 0.0) / double(n);
  const double mean_y = std::accumulate(hist_y.begin(), hist_y.end(), 0.0) / double(n);
  double cov = 0.0, ss_x = 0.0, ss_y = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = hist_x[i] - mean_x;
    const double dy = hist_y[i] - mean_y;
    cov += dx * dy;
    ss_x += dx * dx;
    ss_y += dy * dy;
  }
  if (ss_x / double(n) < kDegenerateVariance || ss_y / double(n) < kDegenerateVariance)
    return 0.5;  // Pearson undefined; neutral midpoint
  const double pearson = cov / std::sqrt(ss_x * ss_y);
  return std::clamp(0.5 * (1.0 + pearson), 0.0, 1.0);
}

double position_similarity(const Eigen::Vector3d& pos_x, const Eigen::Vector3d& pos_y) {
  return std::exp(-(pos_x - pos_y).norm());
}

double size_similarity(const Eigen::Vector3d& size_x, const Eigen::Vector3d& size_y) {
  double min_sum = 0.0, max_sum = 0.0;
  for (int i = 0; i < 3; ++i) {
    if (!(size_x[i] > 0.0) || !(size_y[i] > 0.0))
      throw std::invalid_argument("degenerate box");
    min_sum += std::min(size_x[i], size_y[i]);
    max_sum += std::max(size_x[i], size_y[i]);
  }
  return min_sum / max_sum;
}

double time_similarity(double t_now, double t_last) {
  if (t_now < t_last) throw std::invalid_argument("non-monotonic timestamps");
  return 2.0 / (1.0 + std::exp(t_now - t_last));
}

const std::string& ground_color_predicate(const std::vector<double>& hist,
                                          const GroundingTable& table) {
  if (table.size() != hist.size())
    throw std::invalid_argument("grounding table does not cover all histogram bins");
  std::size_t best = 0;
  for (std::size_t i = 1; i < hist.size(); ++i) {
    if (hist[i] > hist[best]) best = i;
  }
  return table[best];
}

void to_json(nlohmann::json& j, const Percept& percept) {
  j = nlohmann::json{
      {"category", percept.category},
      {"confidence", percept.confidence},
      {"color_hist", percept.color_hist},
      {"size_box", {percept.size_box[0], percept.size_box[1], percept.size_box[2]}},
      {"position", {percept.position[0], percept.position[1], percept.position[2]}},
      {"timestamp", percept.timestamp}};
}

void from_json(const nlohmann::json& j, Percept& percept) {
  j.at("category").get_to(percept.category);
  j.at("confidence").get_to(percept.confidence);
  j.at("color_hist").get_to(percept.color_hist);
  for (int i = 0; i < 3; ++i) {
    percept.size_box[i] = j.at("size_box").at(i).get<double>();
    percept.position[i] = j.at("position").at(i).get<double>();
  }
  j.at("timestamp").get_to(percept.timestamp);
}

}  // namespace anchorworld::percept
