#include "anchorworld/matcher.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <Eigen/Dense>

#include "anchorworld/rng.hpp"

namespace anchorworld::matcher {

namespace {

constexpr int kModelVersion = 1;
constexpr const char* kDatasetHeader = "d_class,d_color,d_pos,d_size,d_time,label";

std::vector<double> feature_row(const SimilarityVector& v, int feature_count) {
  const auto a = v.as_array();
  return std::vector<double>(a.begin(), a.begin() + feature_count);
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double knn_score(const MatchModel& model, std::span<const double> features) {
  const std::size_t n = model.knn_points.size();
  const std::size_t k = std::min<std::size_t>(model.k, n);
  // (distance, training index); index as tie-break keeps the order stable
  std::vector<std::pair<double, std::size_t>> dist(n);
  for (std::size_t i = 0; i < n; ++i) {
    double sum = 0.0;
    for (std::size_t d = 0; d < features.size(); ++d) {
      const double diff = model.knn_points[i][d] - features[d];
      sum += diff * diff;
    }
    dist[i] = {sum, i};
  }
  std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
  int matches = 0;
  for (std::size_t j = 0; j < k; ++j) matches += model.knn_labels[dist[j].second];
  return static_cast<double>(matches) / static_cast<double>(k);
}

double bayes_score(const MatchModel& model, std::span<const double> features) {
  double log_post[2];
  for (int c = 0; c < 2; ++c) {
    double lp = model.bayes[c].log_prior;
    for (std::size_t d = 0; d < features.size(); ++d) {
      const double var = model.bayes[c].variance[d];
      const double diff = features[d] - model.bayes[c].mean[d];
      lp += -0.5 * std::log(2.0 * M_PI * var) - diff * diff / (2.0 * var);
    }
    log_post[c] = lp;
  }
  const double m = std::max(log_post[0], log_post[1]);
  const double e0 = std::exp(log_post[0] - m);
  const double e1 = std::exp(log_post[1] - m);
  return e1 / (e0 + e1);
}

double logistic_score(const MatchModel& model, std::span<const double> features) {
  double z = model.logistic_weights.back();  // bias
  for (std::size_t d = 0; d < features.size(); ++d)
    z += model.logistic_weights[d] * features[d];
  return sigmoid(z);
}

void fit_knn(MatchModel& model, const std::vector<std::vector<double>>& x,
             const std::vector<int>& y) {
  model.knn_points = x;
  model.knn_labels = y;
}

void fit_bayes(MatchModel& model, const std::vector<std::vector<double>>& x,
               const std::vector<int>& y) {
  const int fc = model.feature_count;
  std::array<int, 2> count{0, 0};
  std::array<std::array<double, 5>, 2> sum{};
  for (std::size_t i = 0; i < x.size(); ++i) {
    ++count[y[i]];
    for (int d = 0; d < fc; ++d) sum[y[i]][d] += x[i][d];
  }
  for (int c = 0; c < 2; ++c) {
    model.bayes[c].log_prior = std::log(double(count[c]) / double(x.size()));
    for (int d = 0; d < fc; ++d) model.bayes[c].mean[d] = sum[c][d] / double(count[c]);
  }
  std::array<std::array<double, 5>, 2> ss{};
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (int d = 0; d < fc; ++d) {
      const double diff = x[i][d] - model.bayes[y[i]].mean[d];
      ss[y[i]][d] += diff * diff;
    }
  }
  // sklearn-style variance smoothing relative to the largest feature variance
  double max_var = 0.0;
  for (int c = 0; c < 2; ++c)
    for (int d = 0; d < fc; ++d)
      max_var = std::max(max_var, ss[c][d] / double(count[c]));
  const double floor = std::max(1e-9 * max_var, 1e-12);
  for (int c = 0; c < 2; ++c)
    for (int d = 0; d < fc; ++d)
      model.bayes[c].variance[d] = std::max(ss[c][d] / double(count[c]), floor);
}

void fit_logistic(MatchModel& model, const std::vector<std::vector<double>>& x,
                  const std::vector<int>& y) {
  // Newton-Raphson (IRLS) on ridge-regularized cross-entropy. Inputs already
  // live in [0,1], so no standardization.
  constexpr int kIterations = 25;
  constexpr double kRidge = 1e-6;
  const int fc = model.feature_count;
  const int dim = fc + 1;  // bias in the last slot
  const std::size_t n = x.size();
  Eigen::VectorXd w = Eigen::VectorXd::Zero(dim);
  for (int iter = 0; iter < kIterations; ++iter) {
    Eigen::VectorXd grad = kRidge * w;
    Eigen::MatrixXd hessian = kRidge * Eigen::MatrixXd::Identity(dim, dim);
    for (std::size_t i = 0; i < n; ++i) {
      Eigen::VectorXd xi(dim);
      for (int d = 0; d < fc; ++d) xi[d] = x[i][d];
      xi[fc] = 1.0;
      const double p = sigmoid(w.dot(xi));
      grad += (p - double(y[i])) * xi;
      hessian += std::max(p * (1.0 - p), 1e-12) * xi * xi.transpose();
    }
    w -= hessian.ldlt().solve(grad);
  }
  model.logistic_weights.assign(w.data(), w.data() + dim);
}

TrainMetrics holdout_metrics(const MatchModel& model,
                             const std::vector<std::vector<double>>& x,
                             const std::vector<int>& y) {
  int correct = 0, tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const int predicted = predict_raw(model, x[i]) >= 0.5 ? 1 : 0;
    if (predicted == y[i]) ++correct;
    if (predicted == 1 && y[i] == 1) ++tp;
    if (predicted == 1 && y[i] == 0) ++fp;
    if (predicted == 0 && y[i] == 1) ++fn;
  }
  TrainMetrics m;
  m.n_test = static_cast<int>(x.size());
  m.accuracy = x.empty() ? 0.0 : double(correct) / double(x.size());
  const double denom = 2.0 * tp + fp + fn;
  m.f1 = denom > 0.0 ? 2.0 * tp / denom : 0.0;
  return m;
}

}  // namespace

Algorithm algorithm_from_name(const std::string& name) {
  if (name == "knn") return Algorithm::kKnn;
  if (name == "bayes") return Algorithm::kBayes;
  if (name == "logistic") return Algorithm::kLogistic;
  throw std::invalid_argument("unknown matcher algorithm: " + name);
}

std::string_view algorithm_name(Algorithm algorithm) {
  switch (algorithm) {
    case Algorithm::kKnn: return "knn";
    case Algorithm::kBayes: return "bayes";
    case Algorithm::kLogistic: return "logistic";
  }
  return "logistic";
}

SimilarityVector build_similarity_vector(const percept::Percept& candidate,
                                         const store::Anchor& anchor, double t_now) {
  SimilarityVector v;
  v.d_class = percept::class_similarity(candidate.category, candidate.confidence,
                                        anchor.attributes.category,
                                        anchor.attributes.confidence);
  v.d_color = percept::color_similarity(candidate.color_hist, anchor.attributes.color_hist);
  v.d_pos = percept::position_similarity(candidate.position, anchor.attributes.position);
  v.d_size = percept::size_similarity(candidate.size_box, anchor.attributes.size_box);
  v.d_time = percept::time_similarity(t_now, anchor.last_observed);
  return v;
}

TrainResult train(const std::vector<LabeledSample>& samples, Algorithm algorithm,
                  int feature_count, std::uint64_t split_seed) {
  if (feature_count != 4 && feature_count != 5)
    throw std::invalid_argument("feature count must be 4 or 5");
  std::array<int, 2> label_count{0, 0};
  for (const auto& s : samples) {
    if (s.label != 0 && s.label != 1) throw std::invalid_argument("labels must be 0 or 1");
    ++label_count[s.label];
  }
  if (label_count[0] < 2 || label_count[1] < 2)
    throw std::invalid_argument("degenerate training set");

  // Deterministic Fisher-Yates shuffle, then a 70/30 split.
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(split_seed);
  for (std::size_t i = order.size() - 1; i > 0; --i) {
    const std::size_t j = rng.next_u64() % (i + 1);
    std::swap(order[i], order[j]);
  }
  const std::size_t n_train = samples.size() * 7 / 10;

  std::vector<std::vector<double>> x_train, x_test;
  std::vector<int> y_train, y_test;
  for (std::size_t i = 0; i < order.size(); ++i) {
    const auto& s = samples[order[i]];
    auto row = feature_row(s.features, feature_count);
    if (i < n_train) {
      x_train.push_back(std::move(row));
      y_train.push_back(s.label);
    } else {
      x_test.push_back(std::move(row));
      y_test.push_back(s.label);
    }
  }
  if (std::count(y_train.begin(), y_train.end(), 1) == 0 ||
      std::count(y_train.begin(), y_train.end(), 0) == 0)
    throw std::invalid_argument("degenerate training set");

  TrainResult result;
  result.model.algorithm = algorithm;
  result.model.feature_count = feature_count;
  switch (algorithm) {
    case Algorithm::kKnn: fit_knn(result.model, x_train, y_train); break;
    case Algorithm::kBayes: fit_bayes(result.model, x_train, y_train); break;
    case Algorithm::kLogistic: fit_logistic(result.model, x_train, y_train); break;
  }
  result.metrics = holdout_metrics(result.model, x_test, y_test);
  result.metrics.n_train = static_cast<int>(x_train.size());
  result.model.metrics = result.metrics;
  return result;
}

double predict_raw(const MatchModel& model, std::span<const double> features) {
  if (static_cast<int>(features.size()) != model.feature_count)
    throw std::invalid_argument("similarity vector dimension mismatch");
  switch (model.algorithm) {
    case Algorithm::kKnn: return knn_score(model, features);
    case Algorithm::kBayes: return bayes_score(model, features);
    case Algorithm::kLogistic: return logistic_score(model, features);
  }
  throw std::logic_error("unreachable");
}

double predict(const MatchModel& model, const SimilarityVector& features) {
  const auto row = feature_row(features, model.feature_count);
  return predict_raw(model, row);
}

AssociationResult associate(std::span<const percept::Percept> percepts,
                            const std::vector<const store::Anchor*>& anchors,
                            const MatchModel& model, double threshold, double t_now) {
  struct Pair {
    double score;
    double time_gap;
    std::size_t percept_index;
    std::size_t anchor_index;
  };
  std::vector<Pair> pairs;
  pairs.reserve(percepts.size() * anchors.size());
  for (std::size_t p = 0; p < percepts.size(); ++p) {
    for (std::size_t a = 0; a < anchors.size(); ++a) {
      const auto v = build_similarity_vector(percepts[p], *anchors[a], t_now);
      const double score = predict(model, v);
      pairs.push_back({score, t_now - anchors[a]->last_observed, p, a});
    }
  }
  std::sort(pairs.begin(), pairs.end(), [&](const Pair& lhs, const Pair& rhs) {
    if (lhs.score != rhs.score) return lhs.score > rhs.score;
    if (lhs.time_gap != rhs.time_gap) return lhs.time_gap < rhs.time_gap;
    if (anchors[lhs.anchor_index]->id != anchors[rhs.anchor_index]->id)
      return anchors[lhs.anchor_index]->id < anchors[rhs.anchor_index]->id;
    return lhs.percept_index < rhs.percept_index;
  });

  AssociationResult result;
  result.decisions.resize(percepts.size());
  std::vector<bool> percept_used(percepts.size(), false);
  std::vector<bool> anchor_used(anchors.size(), false);
  for (const Pair& pair : pairs) {
    if (pair.score < threshold) break;  // sorted: everything after is below too
    if (percept_used[pair.percept_index] || anchor_used[pair.anchor_index]) continue;
    percept_used[pair.percept_index] = true;
    anchor_used[pair.anchor_index] = true;
    result.decisions[pair.percept_index] = {true, anchors[pair.anchor_index]->id, pair.score};
  }
  return result;
}

std::vector<LabeledSample> load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset: " + path.string());
  std::vector<LabeledSample> samples;
  std::string line;
  int line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.empty()) continue;
    if (line_number == 1 && line.rfind("d_class", 0) == 0) continue;  // header
    std::istringstream ss(line);
    std::array<double, 6> fields{};
    std::string token;
    bool ok = true;
    for (int i = 0; i < 6 && ok; ++i) {
      if (!std::getline(ss, token, ',')) {
        ok = false;
        break;
      }
      try {
        std::size_t used = 0;
        fields[i] = std::stod(token, &used);
        while (used < token.size() && std::isspace(static_cast<unsigned char>(token[used])))
          ++used;
        if (used != token.size()) ok = false;
      } catch (const std::exception&) {
        ok = false;
      }
    }
    if (ok && std::getline(ss, token, ',')) ok = false;  // trailing fields
    if (ok && fields[5] != 0.0 && fields[5] != 1.0) ok = false;
    if (!ok)
      throw std::runtime_error(path.string() + ":" + std::to_string(line_number) +
                               ": malformed dataset row");
    LabeledSample s;
    s.features = {fields[0], fields[1], fields[2], fields[3], fields[4]};
    s.label = static_cast<int>(fields[5]);
    samples.push_back(s);
  }
  return samples;
}

void save_dataset(const std::filesystem::path& path, std::span<const LabeledSample> samples) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open dataset for writing: " + path.string());
  out << kDatasetHeader << "\n";
  char buffer[64];
  for (const auto& s : samples) {
    const auto a = s.features.as_array();
    for (double v : a) {
      std::snprintf(buffer, sizeof(buffer), "%.17g", v);
      out << buffer << ",";
    }
    out << s.label << "\n";
  }
}

nlohmann::json model_to_json(const MatchModel& model) {
  nlohmann::json j{{"version", kModelVersion},
                   {"algorithm", std::string(algorithm_name(model.algorithm))},
                   {"feature_count", model.feature_count},
                   {"metrics",
                    {{"accuracy", model.metrics.accuracy},
                     {"f1", model.metrics.f1},
                     {"n_train", model.metrics.n_train},
                     {"n_test", model.metrics.n_test}}}};
  switch (model.algorithm) {
    case Algorithm::kKnn:
      j["k"] = model.k;
      j["points"] = model.knn_points;
      j["labels"] = model.knn_labels;
      break;
    case Algorithm::kBayes: {
      nlohmann::json classes = nlohmann::json::array();
      for (int c = 0; c < 2; ++c) {
        classes.push_back(
            {{"log_prior", model.bayes[c].log_prior},
             {"mean", std::vector<double>(model.bayes[c].mean.begin(),
                                          model.bayes[c].mean.begin() + model.feature_count)},
             {"variance",
              std::vector<double>(model.bayes[c].variance.begin(),
                                  model.bayes[c].variance.begin() + model.feature_count)}});
      }
      j["classes"] = classes;
      break;
    }
    case Algorithm::kLogistic:
      j["weights"] = model.logistic_weights;
      break;
  }
  return j;
}

MatchModel model_from_json(const nlohmann::json& j) {
  if (j.at("version").get<int>() != kModelVersion)
    throw std::runtime_error("match model version mismatch");
  MatchModel model;
  model.algorithm = algorithm_from_name(j.at("algorithm").get<std::string>());
  model.feature_count = j.at("feature_count").get<int>();
  if (model.feature_count != 4 && model.feature_count != 5)
    throw std::runtime_error("match model: invalid feature count");
  if (j.contains("metrics")) {
    model.metrics.accuracy = j["metrics"].value("accuracy", 0.0);
    model.metrics.f1 = j["metrics"].value("f1", 0.0);
    model.metrics.n_train = j["metrics"].value("n_train", 0);
    model.metrics.n_test = j["metrics"].value("n_test", 0);
  }
  switch (model.algorithm) {
    case Algorithm::kKnn:
      model.k = j.at("k").get<int>();
      model.knn_points = j.at("points").get<std::vector<std::vector<double>>>();
      model.knn_labels = j.at("labels").get<std::vector<int>>();
      for (const auto& p : model.knn_points)
        if (static_cast<int>(p.size()) != model.feature_count)
          throw std::runtime_error("match model: point dimension mismatch");
      break;
    case Algorithm::kBayes:
      for (int c = 0; c < 2; ++c) {
        const auto& cls = j.at("classes").at(c);
        model.bayes[c].log_prior = cls.at("log_prior").get<double>();
        const auto mean = cls.at("mean").get<std::vector<double>>();
        const auto var = cls.at("variance").get<std::vector<double>>();
        if (static_cast<int>(mean.size()) != model.feature_count ||
            static_cast<int>(var.size()) != model.feature_count)
          throw std::runtime_error("match model: class stats dimension mismatch");
        std::copy(mean.begin(), mean.end(), model.bayes[c].mean.begin());
        std::copy(var.begin(), var.end(), model.bayes[c].variance.begin());
      }
      break;
    case Algorithm::kLogistic:
      model.logistic_weights = j.at("weights").get<std::vector<double>>();
      if (static_cast<int>(model.logistic_weights.size()) != model.feature_count + 1)
        throw std::runtime_error("match model: weight dimension mismatch");
      break;
  }
  return model;
}

void save_model(const std::filesystem::path& path, const MatchModel& model) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open model file for writing: " + path.string());
  out << model_to_json(model).dump(2) << "\n";
}

MatchModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open model file: " + path.string());
  nlohmann::json j;
  in >> j;
  return model_from_json(j);
}

}  // namespace anchorworld::matcher
