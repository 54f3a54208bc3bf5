// Compares the serial reference kernels against their OpenMP counterparts.
// The dual paths are bit-identical by construction (per-particle and
// per-world random streams), so this benchmark is purely about throughput.

#include <benchmark/benchmark.h>

#include "anchorworld/dclite.hpp"
#include "anchorworld/rpf.hpp"

namespace {

using namespace anchorworld;

rpf::Ensemble make_ensemble(int particles, ExecutionMode mode) {
  rpf::TrackerConfig config;
  config.particle_count = particles;
  config.execution = mode;
  rpf::Ensemble ensemble(config, 42);
  ensemble.init_object("cup-1", {0.0, 0.0, 0.06});
  ensemble.init_object("ball-1", {0.2, 0.0, 0.03});
  ensemble.init_object("box-1", {0.5, 0.3, 0.04});
  ensemble.init_object("block-1", {-0.3, 0.1, 0.05});
  return ensemble;
}

void bench_rpf_predict(benchmark::State& state, ExecutionMode mode) {
  auto ensemble = make_ensemble(static_cast<int>(state.range(0)), mode);
  for (auto _ : state) {
    ensemble.predict(0.5);
    benchmark::DoNotOptimize(ensemble.particles().data());
  }
}

void bench_rpf_weight(benchmark::State& state, ExecutionMode mode) {
  auto ensemble = make_ensemble(static_cast<int>(state.range(0)), mode);
  const std::map<std::string, Eigen::Vector3d> obs{
      {"cup-1", {0.0, 0.0, 0.06}}, {"ball-1", {0.2, 0.0, 0.03}}, {"box-1", {0.5, 0.3, 0.04}}};
  const std::vector<std::string> unobserved{"block-1"};
  for (auto _ : state) {
    ensemble.predict(0.5);
    ensemble.weight_and_resample(obs, unobserved);
    benchmark::DoNotOptimize(ensemble.effective_sample_size());
  }
}

void bench_dclite_query(benchmark::State& state, ExecutionMode mode) {
  const auto program = dc::builtin_program("placement");
  const dc::Event event{{"left", {dc::Value(1LL), dc::Value(2LL)}, std::nullopt, "==",
                         dc::Value(std::string("t"))}};
  const int n = static_cast<int>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(dc::query(program, 0, event, n, 7, mode));
  }
}

void rpf_predict_serial(benchmark::State& s) { bench_rpf_predict(s, ExecutionMode::kSerial); }
void rpf_predict_parallel(benchmark::State& s) { bench_rpf_predict(s, ExecutionMode::kParallel); }
void rpf_weight_serial(benchmark::State& s) { bench_rpf_weight(s, ExecutionMode::kSerial); }
void rpf_weight_parallel(benchmark::State& s) { bench_rpf_weight(s, ExecutionMode::kParallel); }
void dclite_query_serial(benchmark::State& s) { bench_dclite_query(s, ExecutionMode::kSerial); }
void dclite_query_parallel(benchmark::State& s) {
  bench_dclite_query(s, ExecutionMode::kParallel);
}

BENCHMARK(rpf_predict_serial)->Arg(10000)->Arg(100000)->Unit(benchmark::kMillisecond);
BENCHMARK(rpf_predict_parallel)->Arg(10000)->Arg(100000)->Unit(benchmark::kMillisecond);
BENCHMARK(rpf_weight_serial)->Arg(10000)->Arg(100000)->Unit(benchmark::kMillisecond);
BENCHMARK(rpf_weight_parallel)->Arg(10000)->Arg(100000)->Unit(benchmark::kMillisecond);
BENCHMARK(dclite_query_serial)->Arg(20000)->Unit(benchmark::kMillisecond);
BENCHMARK(dclite_query_parallel)->Arg(20000)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
