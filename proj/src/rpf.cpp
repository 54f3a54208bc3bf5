#include "anchorworld/rpf.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <Eigen/Dense>

namespace anchorworld::rpf {

namespace {

// Matrix square root for a 3x3 PSD covariance; exact zero stays zero.
Eigen::Matrix3d covariance_root(const Eigen::Matrix3d& cov) {
  if (cov.isZero(0.0)) return Eigen::Matrix3d::Zero();
  Eigen::LLT<Eigen::Matrix3d> llt(cov);
  if (llt.info() == Eigen::Success) return llt.matrixL();
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(cov);
  if (es.eigenvalues().minCoeff() < -1e-12)
    throw std::invalid_argument("covariance must be positive semi-definite");
  return es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
}

Eigen::Vector3d draw_vector(Rng& rng, const Eigen::Matrix3d& root) {
  Eigen::Vector3d z(rng.normal(), rng.normal(), rng.normal());
  return root * z;
}

// Resolves the post-predict position of one object, following attachment
// chains (acyclic by construction). noise[i] is pre-drawn so the draw order
// never depends on chain structure.
void resolve_position(Particle& particle, int index, double dt,
                      const std::vector<Eigen::Vector3d>& noise, std::vector<char>& state) {
  if (state[index] == 2) return;
  if (state[index] == 1) throw std::logic_error("attachment cycle in particle");
  state[index] = 1;
  ObjectBelief& obj = particle.objects[index];
  if (obj.relation.host == kFreeRelation) {
    obj.position += obj.velocity * dt + noise[index];
  } else {
    resolve_position(particle, obj.relation.host, dt, noise, state);
    obj.position = particle.objects[obj.relation.host].position + obj.relation.offset +
                   noise[index];
  }
  state[index] = 2;
}

void predict_one(Particle& particle, std::uint64_t stream_seed,
                 const detail::PredictInputs& in) {
  Rng rng(stream_seed);
  const std::size_t n = particle.objects.size();
  std::vector<Eigen::Vector3d> noise(n);
  for (std::size_t i = 0; i < n; ++i) {
    const bool attached = particle.objects[i].relation.host != kFreeRelation;
    noise[i] = draw_vector(rng, attached ? in.jitter_root : in.motion_root);
    particle.objects[i].prev_position = particle.objects[i].position;
  }
  std::vector<char> state(n, 0);
  for (std::size_t i = 0; i < n; ++i)
    resolve_position(particle, static_cast<int>(i), in.dt, noise, state);
}

double weight_one(const Particle& particle, const detail::WeightInputs& in) {
  double log_increment = 0.0;
  for (const auto& [index, observed] : in.observations) {
    const Eigen::Vector3d diff = observed - particle.objects[index].position;
    log_increment += -0.5 * diff.dot(in.obs_information * diff) - in.obs_log_norm;
  }
  for (int index : in.unobserved) {
    const ObjectBelief& obj = particle.objects[index];
    if (obj.relation.host != kFreeRelation) continue;
    bool near_occluder = false;
    for (const auto& pos : in.observed_positions) {
      if ((obj.position - pos).norm() <= in.visibility_radius) {
        near_occluder = true;
        break;
      }
    }
    if (!near_occluder) log_increment += in.log_p_miss;  // should have been seen
  }
  return log_increment;
}

}  // namespace

namespace detail {

void predict_serial(std::span<Particle> particles, const PredictInputs& in) {
  for (std::size_t i = 0; i < particles.size(); ++i)
    predict_one(particles[i], derive_seed(in.seed, in.op_counter, i), in);
}

void predict_parallel(std::span<Particle> particles, const PredictInputs& in) {
  const std::int64_t n = static_cast<std::int64_t>(particles.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i)
    predict_one(particles[i], derive_seed(in.seed, in.op_counter, i), in);
}

void weight_serial(std::span<const Particle> particles, const WeightInputs& in,
                   std::span<double> log_increment) {
  for (std::size_t i = 0; i < particles.size(); ++i)
    log_increment[i] = weight_one(particles[i], in);
}

void weight_parallel(std::span<const Particle> particles, const WeightInputs& in,
                     std::span<double> log_increment) {
  const std::int64_t n = static_cast<std::int64_t>(particles.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) log_increment[i] = weight_one(particles[i], in);
}

}  // namespace detail

Ensemble::Ensemble(TrackerConfig config, std::uint64_t seed)
    : config_(std::move(config)), seed_(seed) {
  if (config_.particle_count < 1)
    throw std::invalid_argument("particle count must be >= 1");
  if (!(config_.p_miss > 0.0 && config_.p_miss < 1.0))
    throw std::invalid_argument("p_miss must lie in (0,1)");
  init_root_ = covariance_root(config_.sigma_init);
  covariance_root(config_.sigma_motion);  // validates PSD early
  covariance_root(config_.sigma_obs);
}

int Ensemble::index_of(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw std::invalid_argument("unknown object id: " + id);
  return it->second;
}

bool Ensemble::has_object(const std::string& id) const { return index_.contains(id); }

void Ensemble::init_object(const std::string& id, const Eigen::Vector3d& observed_position) {
  if (index_.contains(id)) throw std::invalid_argument("duplicate object id: " + id);
  if (particles_.empty()) {
    particles_.resize(config_.particle_count);
    const double uniform = 1.0 / config_.particle_count;
    for (auto& p : particles_) p.weight = uniform;
  }
  const int index = static_cast<int>(ids_.size());
  ids_.push_back(id);
  index_[id] = index;
  const std::uint64_t op = op_counter_++;
  for (std::size_t i = 0; i < particles_.size(); ++i) {
    Rng rng(derive_seed(seed_, op, i));
    ObjectBelief obj;
    obj.position = observed_position + draw_vector(rng, init_root_);
    obj.prev_position = obj.position;
    particles_[i].objects.push_back(obj);
  }
}

void Ensemble::predict(double dt) {
  if (dt < 0.0) throw std::invalid_argument("predict: dt must be >= 0");
  if (particles_.empty()) return;
  detail::PredictInputs in;
  in.dt = dt;
  in.motion_root = covariance_root(Eigen::Matrix3d(config_.sigma_motion * dt));
  in.jitter_root = covariance_root(Eigen::Matrix3d(config_.sigma_motion * dt * 0.01));
  in.seed = seed_;
  in.op_counter = op_counter_++;
  if (config_.execution == ExecutionMode::kParallel)
    detail::predict_parallel(particles_, in);
  else
    detail::predict_serial(particles_, in);
  last_dt_ = dt;
}

void Ensemble::weight_and_resample(const std::map<std::string, Eigen::Vector3d>& observations,
                                   const std::vector<std::string>& unobserved_ids) {
  if (particles_.empty()) {
    if (!observations.empty())
      throw std::invalid_argument("observation for unknown object id");
    return;
  }
  detail::WeightInputs in;
  for (const auto& [id, pos] : observations) {
    in.observations.emplace_back(index_of(id), pos);
    in.observed_positions.push_back(pos);
  }
  for (const auto& id : unobserved_ids) in.unobserved.push_back(index_of(id));
  Eigen::LLT<Eigen::Matrix3d> llt(config_.sigma_obs);
  if (llt.info() != Eigen::Success)
    throw std::invalid_argument("sigma_obs must be positive definite");
  in.obs_information = llt.solve(Eigen::Matrix3d::Identity());
  double log_det = 0.0;
  const Eigen::Matrix3d L = llt.matrixL();
  for (int i = 0; i < 3; ++i) log_det += 2.0 * std::log(L(i, i));
  in.obs_log_norm = 0.5 * (3.0 * std::log(2.0 * M_PI) + log_det);
  in.log_p_miss = std::log(config_.p_miss);
  in.visibility_radius = 2.0 * config_.attach_length_scale;

  std::vector<double> log_increment(particles_.size());
  const std::uint64_t op = op_counter_++;
  if (config_.execution == ExecutionMode::kParallel)
    detail::weight_parallel(particles_, in, log_increment);
  else
    detail::weight_serial(particles_, in, log_increment);

  // Serial normalization in log space keeps both execution paths bit-equal
  // and avoids underflow when the observation likelihoods are tiny.
  double max_lw = -std::numeric_limits<double>::infinity();
  std::vector<double> lw(particles_.size());
  for (std::size_t i = 0; i < particles_.size(); ++i) {
    lw[i] = std::log(particles_[i].weight) + log_increment[i];
    max_lw = std::max(max_lw, lw[i]);
  }
  if (!std::isfinite(max_lw)) throw std::runtime_error("particle weights degenerate");
  double sum = 0.0;
  for (std::size_t i = 0; i < particles_.size(); ++i) {
    particles_[i].weight = std::exp(lw[i] - max_lw);
    sum += particles_[i].weight;
  }
  for (auto& p : particles_) p.weight /= sum;

  const double ess = effective_sample_size();
  if (ess < config_.ess_threshold * static_cast<double>(particles_.size())) {
    // systematic resampling; preserves particle order
    const std::size_t n = particles_.size();
    Rng rng(derive_seed(seed_, op, n));
    const double offset = rng.uniform01();
    std::vector<Particle> resampled;
    resampled.reserve(n);
    double cumulative = 0.0;
    std::size_t j = 0;
    for (std::size_t i = 0; i < n; ++i) {
      cumulative += particles_[i].weight;
      while (j < n && (static_cast<double>(j) + offset) / static_cast<double>(n) < cumulative) {
        resampled.push_back(particles_[i]);
        ++j;
      }
    }
    while (resampled.size() < n) resampled.push_back(particles_.back());
    particles_.swap(resampled);
    const double uniform = 1.0 / static_cast<double>(n);
    for (auto& p : particles_) p.weight = uniform;
  }

  // Observed objects get their velocity re-estimated from the displacement
  // over the last predict interval.
  if (last_dt_ > 0.0) {
    for (const auto& [index, observed] : in.observations) {
      (void)observed;
      for (auto& p : particles_) {
        ObjectBelief& obj = p.objects[index];
        obj.velocity = (obj.position - obj.prev_position) / last_dt_;
      }
    }
  }
}

void Ensemble::propose_attachments(const std::string& vanished_id,
                                   const std::map<std::string, Eigen::Vector3d>& candidate_hosts,
                                   const Eigen::Vector3d& last_seen) {
  const int vanished = index_of(vanished_id);
  struct Candidate {
    int host;
    Eigen::Vector3d offset;
    double weight;
  };
  std::vector<Candidate> candidates;
  for (const auto& [id, host_pos] : candidate_hosts) {
    const int host = index_of(id);
    if (host == vanished) continue;
    candidates.push_back({host, last_seen - host_pos,
                          std::exp(-(last_seen - host_pos).norm() / config_.attach_length_scale)});
  }
  const std::uint64_t op = op_counter_++;
  for (std::size_t i = 0; i < particles_.size(); ++i) {
    Particle& particle = particles_[i];
    // a host whose chain leads back to the vanished object would form a cycle
    auto reaches_vanished = [&](int host) {
      int cursor = host;
      while (cursor != kFreeRelation) {
        if (cursor == vanished) return true;
        cursor = particle.objects[cursor].relation.host;
      }
      return false;
    };
    double total = config_.free_weight;
    for (const auto& c : candidates)
      if (!reaches_vanished(c.host)) total += c.weight;
    Rng rng(derive_seed(seed_, op, i));
    const double u = rng.uniform01() * total;
    double cumulative = config_.free_weight;
    Attachment relation;  // stay free by default
    if (u >= cumulative) {
      for (const auto& c : candidates) {
        if (reaches_vanished(c.host)) continue;
        cumulative += c.weight;
        if (u < cumulative) {
          relation.host = c.host;
          relation.offset = c.offset;
          break;
        }
      }
    }
    particle.objects[vanished].relation = relation;
  }
}

void Ensemble::detach_on_reveal(const std::string& id) {
  const int index = index_of(id);
  for (auto& p : particles_) {
    p.objects[index].relation = Attachment{};
    p.objects[index].velocity.setZero();
  }
}

Estimate Ensemble::estimate(const std::string& id) const {
  const int index = index_of(id);
  Estimate est;
  std::map<int, double> host_mass;
  double free_mass = 0.0;
  double total = 0.0;
  // accumulate displacements from a reference point so that a degenerate
  // ensemble reports its common position exactly
  const Eigen::Vector3d reference = particles_.front().objects[index].position;
  Eigen::Vector3d moment = Eigen::Vector3d::Zero();
  for (const auto& p : particles_) {
    total += p.weight;
    moment += p.weight * (p.objects[index].position - reference);
    const int host = p.objects[index].relation.host;
    if (host == kFreeRelation)
      free_mass += p.weight;
    else
      host_mass[host] += p.weight;
  }
  est.mean = reference + moment / total;
  est.free_probability = free_mass / total;
  for (const auto& [host, mass] : host_mass) est.attachment[ids_[host]] = mass / total;
  return est;
}

double Ensemble::effective_sample_size() const {
  double sum_sq = 0.0;
  for (const auto& p : particles_) sum_sq += p.weight * p.weight;
  return sum_sq > 0.0 ? 1.0 / sum_sq : 0.0;
}

}  // namespace anchorworld::rpf
