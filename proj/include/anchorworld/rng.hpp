#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace anchorworld {

// SplitMix64 step; used for seeding and for deriving sub-stream seeds.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ull;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Derives an independent stream seed from a base seed and stream indices.
// Scheduling-independent: particle i at op counter c always gets the same
// stream no matter which thread processes it.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0) {
  std::uint64_t s = base;
  std::uint64_t out = splitmix64(s);
  s ^= a * 0xd1342543de82ef95ull;
  out ^= splitmix64(s);
  s ^= b * 0xaf251af3b0f025b5ull;
  out ^= splitmix64(s);
  return out;
}

// xoshiro256++ with SplitMix64 seeding.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    std::uint64_t s = seed;
    for (auto& word : state_) word = splitmix64(s);
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Uniform double in [0, 1).
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double low, double high) {
    if (!(high > low)) throw std::invalid_argument("uniform: require high > low");
    return low + (high - low) * uniform01();
  }

  // Standard normal via the Marsaglia polar method.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform01() - 1.0;
      v = 2.0 * uniform01() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double m = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * m;
    has_spare_ = true;
    return u * m;
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Poisson draw; Knuth's product method, split additively for large means.
  long long poisson(double mean) {
    if (!(mean > 0.0)) throw std::invalid_argument("poisson: require mean > 0");
    if (mean > 30.0) return poisson(mean / 2.0) + poisson(mean - mean / 2.0);
    const double limit = std::exp(-mean);
    long long count = -1;
    double product = 1.0;
    do {
      product *= uniform01();
      ++count;
    } while (product > limit);
    return count;
  }

  // Gamma(shape, 1) via Marsaglia-Tsang, with the shape<1 boost.
  double gamma(double shape) {
    if (!(shape > 0.0)) throw std::invalid_argument("gamma: require shape > 0");
    if (shape < 1.0) {
      const double u = std::max(uniform01(), 0x1.0p-53);
      return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x, v;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = uniform01();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

  // Dirichlet draw via normalized gammas. Zero concentrations yield zero mass.
  std::vector<double> dirichlet(const std::vector<double>& concentration) {
    std::vector<double> draw(concentration.size(), 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < concentration.size(); ++i) {
      if (concentration[i] > 0.0) draw[i] = gamma(concentration[i]);
      total += draw[i];
    }
    if (total <= 0.0) throw std::invalid_argument("dirichlet: all concentrations zero");
    for (double& v : draw) v /= total;
    return draw;
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  std::array<std::uint64_t, 4> state_{};
  bool has_spare_ = false;
  double spare_ = 0.0;
};

enum class ExecutionMode { kSerial, kParallel };

}  // namespace anchorworld
