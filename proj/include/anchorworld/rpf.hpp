#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "anchorworld/rng.hpp"

namespace anchorworld::rpf {

inline constexpr int kFreeRelation = -1;

/// Discrete relation hypothesis: free, or rigidly attached to a host object.
struct Attachment {
  int host = kFreeRelation;  // index into the ensemble's object registry
  Eigen::Vector3d offset = Eigen::Vector3d::Zero();
};

struct ObjectBelief {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  Eigen::Vector3d velocity = Eigen::Vector3d::Zero();
  Eigen::Vector3d prev_position = Eigen::Vector3d::Zero();  // position before the last predict
  Attachment relation;
};

struct Particle {
  std::vector<ObjectBelief> objects;  // aligned with the ensemble registry
  double weight = 0.0;
};

struct TrackerConfig {
  int particle_count = 2000;
  Eigen::Matrix3d sigma_init = 0.02 * 0.02 * Eigen::Matrix3d::Identity();
  Eigen::Matrix3d sigma_motion = 0.05 * 0.05 * Eigen::Matrix3d::Identity();  // per second
  Eigen::Matrix3d sigma_obs = 0.05 * 0.05 * Eigen::Matrix3d::Identity();
  double p_miss = 0.1;             // penalty for a visibly-free but unseen object
  double ess_threshold = 0.5;      // resample when ESS < threshold * N
  double attach_length_scale = 0.15;  // lambda of the attachment softmax [m]
  double free_weight = 0.05;          // stay-free weight in the attachment proposal
  ExecutionMode execution = ExecutionMode::kParallel;
};

struct Estimate {
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  double free_probability = 0.0;
  std::map<std::string, double> attachment;  // host id -> posterior probability
};

/// The temporary world model: a weighted particle ensemble over object
/// positions, velocities and attachment relations. All randomness derives
/// from (seed, operation counter, particle index), so results are identical
/// across thread schedules and between the serial and parallel kernels.
class Ensemble {
 public:
  Ensemble(TrackerConfig config, std::uint64_t seed);

  // Adds an object to every particle: position ~ N(observed, sigma_init),
  // velocity zero, relation free. Throws on duplicate id.
  void init_object(const std::string& id, const Eigen::Vector3d& observed_position);

  // Constant-velocity step for free objects; attached objects ride their
  // host plus the stored offset (with a small jitter).
  void predict(double dt);

  // Multiplies weights by the product of Gaussian observation densities,
  // applies the negative-information penalty for unobserved free objects
  // away from every observed one, normalizes, and resamples systematically
  // when the effective sample size drops below the configured fraction.
  void weight_and_resample(const std::map<std::string, Eigen::Vector3d>& observations,
                           const std::vector<std::string>& unobserved_ids);

  // Per particle, resamples the vanished object's relation among the
  // candidate hosts (softmax in distance to the last-seen position) and a
  // fixed stay-free weight.
  void propose_attachments(const std::string& vanished_id,
                           const std::map<std::string, Eigen::Vector3d>& candidate_hosts,
                           const Eigen::Vector3d& last_seen);

  // Frees the object in every particle and zeroes its velocity.
  void detach_on_reveal(const std::string& id);

  Estimate estimate(const std::string& id) const;

  double effective_sample_size() const;
  bool has_object(const std::string& id) const;
  const std::vector<std::string>& object_ids() const { return ids_; }
  std::size_t particle_count() const { return particles_.size(); }
  std::span<const Particle> particles() const { return particles_; }
  std::span<Particle> particles_mutable() { return particles_; }
  const TrackerConfig& config() const { return config_; }

 private:
  int index_of(const std::string& id) const;  // throws on unknown id

  TrackerConfig config_;
  Eigen::Matrix3d init_root_;  // Cholesky factor of sigma_init
  std::uint64_t seed_;
  std::uint64_t op_counter_ = 0;
  double last_dt_ = 0.0;
  std::vector<std::string> ids_;
  std::map<std::string, int> index_;
  std::vector<Particle> particles_;
};

namespace detail {

// Kernel inputs shared by the serial reference and the OpenMP path.
struct PredictInputs {
  double dt = 0.0;
  Eigen::Matrix3d motion_root = Eigen::Matrix3d::Zero();  // chol(sigma_motion * dt)
  Eigen::Matrix3d jitter_root = Eigen::Matrix3d::Zero();  // chol(sigma_motion * dt * 0.01)
  std::uint64_t seed = 0;
  std::uint64_t op_counter = 0;
};

void predict_serial(std::span<Particle> particles, const PredictInputs& in);
void predict_parallel(std::span<Particle> particles, const PredictInputs& in);

struct WeightInputs {
  std::vector<std::pair<int, Eigen::Vector3d>> observations;  // object index -> position
  std::vector<int> unobserved;                                // object indices
  std::vector<Eigen::Vector3d> observed_positions;            // for the visibility test
  Eigen::Matrix3d obs_information = Eigen::Matrix3d::Zero();  // sigma_obs^-1
  double obs_log_norm = 0.0;  // log((2*pi)^{3/2} |sigma_obs|^{1/2})
  double log_p_miss = 0.0;
  double visibility_radius = 0.0;  // 2 * attach_length_scale
};

// Writes per-particle log-weight increments; weights themselves are
// normalized serially afterwards so both paths agree bit-for-bit.
void weight_serial(std::span<const Particle> particles, const WeightInputs& in,
                   std::span<double> log_increment);
void weight_parallel(std::span<const Particle> particles, const WeightInputs& in,
                     std::span<double> log_increment);

}  // namespace detail

}  // namespace anchorworld::rpf
