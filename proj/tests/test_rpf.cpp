#include "doctest.h"

#include <cmath>

#include "anchorworld/rpf.hpp"
#include "oracles.hpp"

using namespace anchorworld;
using namespace anchorworld::rpf;

namespace {

TrackerConfig exact_config(int n) {
  TrackerConfig cfg;
  cfg.particle_count = n;
  cfg.sigma_init.setZero();
  cfg.sigma_motion.setZero();
  return cfg;
}

}  // namespace

TEST_CASE("init with zero covariance places every particle at the observation") {
  Ensemble e(exact_config(200), 1);
  const Eigen::Vector3d obs{0.4, -0.2, 0.7};
  e.init_object("cup-1", obs);
  for (const auto& p : e.particles()) {
    CHECK(p.objects[0].position == obs);
    CHECK(p.objects[0].velocity == Eigen::Vector3d::Zero());
    CHECK(p.objects[0].relation.host == kFreeRelation);
  }
}

TEST_CASE("init scatters around the observation within the CLT bound") {
  TrackerConfig cfg;
  cfg.particle_count = 4000;
  Ensemble e(cfg, 7);
  const Eigen::Vector3d obs{1.0, 2.0, 0.5};
  e.init_object("cup-1", obs);
  const auto est = e.estimate("cup-1");
  const double sigma = 0.02;
  for (int d = 0; d < 3; ++d)
    CHECK(std::abs(est.mean[d] - obs[d]) < 3.0 * sigma / std::sqrt(4000.0));
}

TEST_CASE("duplicate object ids are rejected") {
  Ensemble e(exact_config(10), 1);
  e.init_object("cup-1", {0, 0, 0});
  CHECK_THROWS_AS(e.init_object("cup-1", {1, 1, 1}), std::invalid_argument);
}

TEST_CASE("noise-free predict shifts free objects by velocity times dt") {
  Ensemble e(exact_config(50), 1);
  e.init_object("cup-1", {0, 0, 0});
  for (auto& p : e.particles_mutable()) p.objects[0].velocity = {3, 0, 0};
  e.predict(1.0);
  for (const auto& p : e.particles()) CHECK(p.objects[0].position == Eigen::Vector3d{3, 0, 0});
  // consecutive noise-free predicts compose additively
  e.predict(1.0);
  for (const auto& p : e.particles()) CHECK(p.objects[0].position == Eigen::Vector3d{6, 0, 0});
}

TEST_CASE("attached objects ride their host rigidly") {
  Ensemble e(exact_config(50), 1);
  e.init_object("cup-1", {0, 0, 0});
  e.init_object("ball-1", {0, 0, -0.1});
  for (auto& p : e.particles_mutable()) {
    p.objects[0].velocity = {1, 0, 0};
    p.objects[1].relation.host = 0;
    p.objects[1].relation.offset = {0, 0, -0.1};
  }
  e.predict(1.0);
  for (const auto& p : e.particles()) {
    CHECK(p.objects[0].position == Eigen::Vector3d{1, 0, 0});
    CHECK(p.objects[1].position == Eigen::Vector3d{1, 0, -0.1});
  }
}

TEST_CASE("rigid carry is exact along a whole trajectory") {
  // attachment probability one (free weight zero) and zero motion noise:
  // the hidden object's estimate equals host plus offset, bit for bit
  TrackerConfig cfg = exact_config(100);
  cfg.free_weight = 0.0;
  Ensemble e(cfg, 3);
  e.init_object("host", {0.2, 0.1, 0.0});
  e.init_object("hidden", {0.25, 0.1, 0.0});
  e.propose_attachments("hidden", {{"host", {0.2, 0.1, 0.0}}}, {0.25, 0.1, 0.0});
  const Eigen::Vector3d offset{0.05, 0.0, 0.0};
  Eigen::Vector3d host_pos{0.2, 0.1, 0.0};
  for (int step = 0; step < 30; ++step) {
    // piecewise-varying host velocity makes an arbitrary trajectory
    const Eigen::Vector3d v{0.1 * std::cos(0.3 * step), 0.08 * std::sin(0.2 * step), 0.0};
    for (auto& p : e.particles_mutable()) p.objects[0].velocity = v;
    e.predict(0.5);
    host_pos += v * 0.5;
    const auto host_est = e.estimate("host");
    const auto hidden_est = e.estimate("hidden");
    CHECK(host_est.mean == host_pos);
    CHECK(hidden_est.mean == host_pos + offset);
    CHECK(hidden_est.attachment.at("host") == 1.0);
  }
}

TEST_CASE("observation weighting follows the gaussian density ratio") {
  TrackerConfig cfg = exact_config(2);
  cfg.ess_threshold = 0.0;  // never resample
  Ensemble e(cfg, 1);
  const Eigen::Vector3d obs{0, 0, 0};
  e.init_object("cup-1", obs);
  const double sigma = std::sqrt(cfg.sigma_obs(0, 0));
  auto particles = e.particles_mutable();
  particles[0].objects[0].position = obs;                              // at the observation
  particles[1].objects[0].position = obs + Eigen::Vector3d{sigma, 0, 0};  // one sigma away
  e.weight_and_resample({{"cup-1", obs}}, {});
  const double ratio = e.particles()[0].weight / e.particles()[1].weight;
  CHECK(ratio == doctest::Approx(std::exp(0.5)).epsilon(1e-9));
}

TEST_CASE("a step with no observations and no penalties leaves weights unchanged") {
  TrackerConfig cfg;
  cfg.particle_count = 100;
  Ensemble e(cfg, 5);
  e.init_object("cup-1", {0, 0, 0});
  std::vector<double> before;
  for (const auto& p : e.particles()) before.push_back(p.weight);
  e.weight_and_resample({}, {});
  for (std::size_t i = 0; i < before.size(); ++i) CHECK(e.particles()[i].weight == before[i]);
}

TEST_CASE("weights normalize to one after every update") {
  TrackerConfig cfg;
  cfg.particle_count = 300;
  Ensemble e(cfg, 11);
  e.init_object("cup-1", {0, 0, 0});
  e.init_object("ball-1", {0.3, 0, 0});
  Rng rng(9);
  for (int step = 0; step < 20; ++step) {
    e.predict(0.5);
    const Eigen::Vector3d obs{0.01 * step + rng.uniform(-0.01, 0.01), 0, 0};
    e.weight_and_resample({{"cup-1", obs}}, {"ball-1"});
    double sum = 0;
    for (const auto& p : e.particles()) {
      CHECK(p.weight >= 0.0);
      sum += p.weight;
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("observations for unknown objects are rejected") {
  TrackerConfig cfg;
  cfg.particle_count = 10;
  Ensemble e(cfg, 1);
  e.init_object("cup-1", {0, 0, 0});
  CHECK_THROWS_AS(e.weight_and_resample({{"ghost", {0, 0, 0}}}, {}), std::invalid_argument);
  CHECK_THROWS_AS(e.estimate("ghost"), std::invalid_argument);
  CHECK_THROWS_AS(e.detach_on_reveal("ghost"), std::invalid_argument);
}

TEST_CASE("posterior mean tracks a kalman oracle on the linear-gaussian scenario") {
  const int n_particles = 2000;
  const double dt = 0.5;
  const double q = 0.05 * 0.05;       // motion noise per second (x axis)
  const double r = 0.02 * 0.02;       // observation variance
  const double init_var = 0.02 * 0.02;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    TrackerConfig cfg;
    cfg.particle_count = n_particles;
    cfg.sigma_init = Eigen::Vector3d{init_var, 1e-12, 1e-12}.asDiagonal();
    cfg.sigma_motion = Eigen::Vector3d{q, 1e-12, 1e-12}.asDiagonal();
    cfg.sigma_obs = r * Eigen::Matrix3d::Identity();
    Ensemble e(cfg, derive_seed(500, seed));

    Rng obs_rng(derive_seed(600, seed));
    double x_true = 0.0;
    e.init_object("cup-1", {x_true, 0, 0});
    oracles::ScalarKalman kf(x_true, init_var, q, r);
    for (int step = 1; step <= 50; ++step) {
      x_true += 0.04 * dt + std::sqrt(q * dt) * obs_rng.normal();
      const double y = x_true + std::sqrt(r) * obs_rng.normal();
      e.predict(dt);
      e.weight_and_resample({{"cup-1", {y, 0, 0}}}, {});
      kf.predict(dt);
      kf.update(y);
      const double pf_mean = e.estimate("cup-1").mean[0];
      const double bound = 3.0 * kf.position_std() / std::sqrt(double(n_particles));
      CHECK(std::abs(pf_mean - kf.position_mean()) < bound);
    }
  }
}

TEST_CASE("attachment proposal concentrates on a host at the vanish position") {
  TrackerConfig cfg;
  cfg.particle_count = 2000;
  cfg.attach_length_scale = 0.01;  // sharp softmax
  Ensemble e(cfg, 21);
  e.init_object("host", {0.5, 0, 0});
  e.init_object("hidden", {0.5, 0, 0});
  e.propose_attachments("hidden", {{"host", {0.5, 0, 0}}}, {0.5, 0, 0});
  const auto est = e.estimate("hidden");
  // host weight exp(0)=1 versus free weight 0.05
  CHECK(est.attachment.at("host") > 0.9);
  CHECK(est.free_probability < 0.1);
}

TEST_CASE("no candidate hosts leaves every particle free") {
  TrackerConfig cfg;
  cfg.particle_count = 500;
  Ensemble e(cfg, 23);
  e.init_object("hidden", {0.5, 0, 0});
  e.propose_attachments("hidden", {}, {0.5, 0, 0});
  const auto est = e.estimate("hidden");
  CHECK(est.free_probability == 1.0);
  CHECK(est.attachment.empty());
}

TEST_CASE("two equidistant hosts split the attachment evenly") {
  TrackerConfig cfg;
  cfg.particle_count = 4000;
  cfg.free_weight = 0.0;
  Ensemble e(cfg, 25);
  e.init_object("a", {-0.1, 0, 0});
  e.init_object("b", {0.1, 0, 0});
  e.init_object("hidden", {0, 0, 0});
  e.propose_attachments("hidden", {{"a", {-0.1, 0, 0}}, {"b", {0.1, 0, 0}}}, {0, 0, 0});
  const auto est = e.estimate("hidden");
  const double bound = 3.0 / std::sqrt(4000.0);
  CHECK(std::abs(est.attachment.at("a") - 0.5) < bound);
  CHECK(std::abs(est.attachment.at("b") - 0.5) < bound);
}

TEST_CASE("attachment proposals never create cycles") {
  TrackerConfig cfg = exact_config(200);
  cfg.free_weight = 0.0;  // force attachment whenever a host is legal
  Ensemble e(cfg, 27);
  e.init_object("a", {0, 0, 0});
  e.init_object("b", {0, 0, 0});
  // a rides b; proposing b -> a would close a cycle, so b must stay free
  for (auto& p : e.particles_mutable()) p.objects[0].relation.host = 1;
  e.propose_attachments("b", {{"a", {0, 0, 0}}}, {0, 0, 0});
  for (const auto& p : e.particles()) CHECK(p.objects[1].relation.host == kFreeRelation);
}

TEST_CASE("detach on reveal frees the object and zeroes velocity, idempotently") {
  TrackerConfig cfg;
  cfg.particle_count = 100;
  Ensemble e(cfg, 29);
  e.init_object("host", {0, 0, 0});
  e.init_object("hidden", {0.05, 0, 0});
  e.propose_attachments("hidden", {{"host", {0, 0, 0}}}, {0.05, 0, 0});
  for (auto& p : e.particles_mutable()) p.objects[1].velocity = {1, 2, 3};
  e.detach_on_reveal("hidden");
  for (const auto& p : e.particles()) {
    CHECK(p.objects[1].relation.host == kFreeRelation);
    CHECK(p.objects[1].velocity == Eigen::Vector3d::Zero());
  }
  e.detach_on_reveal("hidden");  // idempotent
  CHECK(e.estimate("hidden").free_probability == 1.0);
}

TEST_CASE("all particles at one point estimate that point with a free posterior") {
  Ensemble e(exact_config(64), 31);
  const Eigen::Vector3d p{0.3, 0.4, 0.5};
  e.init_object("cup-1", p);
  const auto est = e.estimate("cup-1");
  CHECK(est.mean == p);
  CHECK(est.free_probability == 1.0);
  CHECK(est.attachment.empty());
}

TEST_CASE("systematic resampling preserves the weighted mean in expectation") {
  const int trials = 200;
  const int n = 500;
  double drift_sum = 0.0;
  double sigma_single = 0.0;
  for (int trial = 0; trial < trials; ++trial) {
    TrackerConfig cfg;
    cfg.particle_count = n;
    cfg.sigma_init = 0.05 * 0.05 * Eigen::Matrix3d::Identity();
    Ensemble e(cfg, derive_seed(700, trial));
    e.init_object("cup-1", {0, 0, 0});
    // skewed weights with low ESS so the empty update below must resample
    auto particles = e.particles_mutable();
    double wsum = 0.0;
    for (auto& p : particles) {
      p.weight = std::exp(40.0 * p.objects[0].position[0]);
      wsum += p.weight;
    }
    double pre_mean = 0.0, pre_var = 0.0;
    for (auto& p : particles) {
      p.weight /= wsum;
      pre_mean += p.weight * p.objects[0].position[0];
    }
    for (auto& p : particles) {
      const double d = p.objects[0].position[0] - pre_mean;
      pre_var += p.weight * d * d;
    }
    e.weight_and_resample({}, {});
    REQUIRE(e.effective_sample_size() == doctest::Approx(double(n)));  // resample happened
    drift_sum += e.estimate("cup-1").mean[0] - pre_mean;
    sigma_single += std::sqrt(pre_var / n);
  }
  sigma_single /= trials;
  CHECK(std::abs(drift_sum / trials) < 4.0 * sigma_single / std::sqrt(double(trials)));
}

TEST_CASE("resampling triggers only below the ESS threshold") {
  TrackerConfig cfg;
  cfg.particle_count = 100;
  cfg.sigma_init = 0.05 * 0.05 * Eigen::Matrix3d::Identity();
  Ensemble e(cfg, 33);
  e.init_object("cup-1", {0, 0, 0});
  // mild weight skew: ESS stays above half
  auto particles = e.particles_mutable();
  double wsum = 0;
  for (std::size_t i = 0; i < particles.size(); ++i) {
    particles[i].weight = (i % 2) ? 1.2 : 0.8;
    wsum += particles[i].weight;
  }
  for (auto& p : particles) p.weight /= wsum;
  e.weight_and_resample({}, {});
  bool any_off_uniform = false;
  for (const auto& p : e.particles())
    if (p.weight != doctest::Approx(1.0 / 100)) any_off_uniform = true;
  CHECK(any_off_uniform);  // kept original weights: no resample happened
}

TEST_CASE("identical seeds and operations give bit-identical ensembles") {
  for (auto mode : {ExecutionMode::kSerial, ExecutionMode::kParallel}) {
    TrackerConfig cfg;
    cfg.particle_count = 400;
    cfg.execution = mode;
    auto run = [&] {
      Ensemble e(cfg, 99);
      e.init_object("cup-1", {0, 0, 0});
      e.init_object("ball-1", {0.2, 0, 0});
      e.predict(0.5);
      e.weight_and_resample({{"cup-1", {0.01, 0, 0}}}, {"ball-1"});
      e.propose_attachments("ball-1", {{"cup-1", {0.01, 0, 0}}}, {0.2, 0, 0});
      e.predict(0.5);
      e.weight_and_resample({{"cup-1", {0.02, 0, 0}}}, {"ball-1"});
      return e;
    };
    const Ensemble a = run();
    const Ensemble b = run();
    for (std::size_t i = 0; i < a.particle_count(); ++i) {
      CHECK(a.particles()[i].weight == b.particles()[i].weight);
      for (std::size_t o = 0; o < 2; ++o) {
        CHECK(a.particles()[i].objects[o].position == b.particles()[i].objects[o].position);
        CHECK(a.particles()[i].objects[o].velocity == b.particles()[i].objects[o].velocity);
        CHECK(a.particles()[i].objects[o].relation.host ==
              b.particles()[i].objects[o].relation.host);
      }
    }
  }
}

TEST_CASE("serial and parallel kernels produce bit-identical results") {
  auto run = [](ExecutionMode mode) {
    TrackerConfig cfg;
    cfg.particle_count = 1000;
    cfg.execution = mode;
    Ensemble e(cfg, 1234);
    e.init_object("cup-1", {0, 0, 0});
    e.init_object("ball-1", {0.3, 0.1, 0});
    e.init_object("box-1", {0.6, 0.4, 0});
    for (int step = 0; step < 10; ++step) {
      e.predict(0.5);
      e.weight_and_resample(
          {{"cup-1", {0.01 * step, 0, 0}}, {"box-1", {0.6, 0.4 + 0.01 * step, 0}}},
          {"ball-1"});
    }
    return e;
  };
  const Ensemble serial = run(ExecutionMode::kSerial);
  const Ensemble parallel = run(ExecutionMode::kParallel);
  REQUIRE(serial.particle_count() == parallel.particle_count());
  for (std::size_t i = 0; i < serial.particle_count(); ++i) {
    CHECK(serial.particles()[i].weight == parallel.particles()[i].weight);
    for (std::size_t o = 0; o < 3; ++o) {
      CHECK(serial.particles()[i].objects[o].position ==
            parallel.particles()[i].objects[o].position);
      CHECK(serial.particles()[i].objects[o].velocity ==
            parallel.particles()[i].objects[o].velocity);
    }
  }
}

TEST_CASE("detached objects re-lock onto observations within a few updates") {
  TrackerConfig cfg;
  cfg.particle_count = 2000;
  Ensemble e(cfg, 41);
  e.init_object("host", {0, 0, 0});
  e.init_object("hidden", {0.05, 0, 0});
  e.propose_attachments("hidden", {{"host", {0, 0, 0}}}, {0.05, 0, 0});
  for (int step = 0; step < 5; ++step) {
    e.predict(0.5);
    e.weight_and_resample({{"host", {0, 0, 0}}}, {"hidden"});
  }
  e.detach_on_reveal("hidden");
  const Eigen::Vector3d reveal{0.06, 0.01, 0};
  for (int step = 0; step < 3; ++step) {
    e.predict(0.5);
    e.weight_and_resample({{"host", {0, 0, 0}}, {"hidden", reveal}}, {});
  }
  CHECK(std::abs(e.estimate("hidden").mean[0] - reveal[0]) < 0.02);
  CHECK(e.estimate("hidden").free_probability == 1.0);
}
