#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "anchorworld/dclite.hpp"
#include "anchorworld/matcher.hpp"
#include "anchorworld/simkit.hpp"

namespace {

using namespace anchorworld;

constexpr std::uint64_t kDefaultDatasetSeed = 0x5eedULL;
constexpr std::uint64_t kDefaultSplitSeed = 1;
constexpr int kDefaultDatasetSize = 5400;

// Deterministic fallback model when no --model file is given.
matcher::MatchModel default_model() {
  const auto dataset = sim::generate_matcher_dataset(sim::dataset_scenarios(),
                                                     kDefaultDatasetSeed, kDefaultDatasetSize);
  return matcher::train(dataset, matcher::Algorithm::kLogistic, 5, kDefaultSplitSeed).model;
}

void write_or_print(const nlohmann::json& j, const std::string& path) {
  const std::string text = j.dump(2) + "\n";
  std::cout << text;
  if (!path.empty()) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open output file: " + path);
    out << text;
  }
}

struct RunOptions {
  std::string scenario;
  std::uint64_t seed = 0;
  int particles = 2000;
  std::string tracker = "on";
  double threshold = 0.5;
  std::string model_path;
  std::string trace_path;
  std::string metrics_path;
  std::string config_path;
};

// --config supplies defaults; explicit flags win.
void apply_config_file(const CLI::App& cmd, RunOptions& opt) {
  if (opt.config_path.empty()) return;
  std::ifstream in(opt.config_path);
  if (!in) throw std::runtime_error("cannot open config file: " + opt.config_path);
  nlohmann::json cfg;
  in >> cfg;
  auto overridden = [&](const std::string& flag) { return cmd.count(flag) > 0; };
  if (cfg.contains("scenario") && !overridden("--scenario"))
    opt.scenario = cfg["scenario"].get<std::string>();
  if (cfg.contains("seed") && !overridden("--seed")) opt.seed = cfg["seed"].get<std::uint64_t>();
  if (cfg.contains("particles") && !overridden("--particles"))
    opt.particles = cfg["particles"].get<int>();
  if (cfg.contains("tracker") && !overridden("--tracker"))
    opt.tracker = cfg["tracker"].get<std::string>();
  if (cfg.contains("threshold") && !overridden("--threshold"))
    opt.threshold = cfg["threshold"].get<double>();
  if (cfg.contains("model") && !overridden("--model"))
    opt.model_path = cfg["model"].get<std::string>();
  if (cfg.contains("trace") && !overridden("--trace"))
    opt.trace_path = cfg["trace"].get<std::string>();
  if (cfg.contains("metrics") && !overridden("--metrics"))
    opt.metrics_path = cfg["metrics"].get<std::string>();
}

int cmd_run(const CLI::App& cmd, RunOptions opt) {
  apply_config_file(cmd, opt);
  if (opt.scenario.empty()) throw CLI::ValidationError("--scenario is required");
  if (opt.particles < 1) throw CLI::ValidationError("--particles must be >= 1");
  if (opt.tracker != "on" && opt.tracker != "off")
    throw CLI::ValidationError("--tracker must be 'on' or 'off'");

  const sim::Scenario scenario = sim::resolve_scenario(opt.scenario);
  const matcher::MatchModel model =
      opt.model_path.empty() ? default_model() : matcher::load_model(opt.model_path);

  loop::WorldConfig config;
  config.threshold = opt.threshold;
  config.tracker_enabled = opt.tracker == "on";
  config.tracker.particle_count = opt.particles;

  std::optional<std::ofstream> trace_file;
  std::ostream* trace_out = nullptr;
  if (!opt.trace_path.empty()) {
    trace_file.emplace(opt.trace_path);
    if (!*trace_file) throw std::runtime_error("cannot open trace file: " + opt.trace_path);
    trace_out = &*trace_file;
  }

  const sim::RunResult result = sim::run_scenario(scenario, model, config, opt.seed, trace_out);

  nlohmann::json out{{"scenario", scenario.name},
                     {"seed", opt.seed},
                     {"particles", opt.particles},
                     {"tracker", opt.tracker},
                     {"threshold", opt.threshold},
                     {"matcher",
                      {{"algorithm", std::string(matcher::algorithm_name(model.algorithm))},
                       {"accuracy", model.metrics.accuracy},
                       {"f1", model.metrics.f1}}},
                     {"metrics", result.metrics.to_json()},
                     {"consonance_violations", result.consonance_violations}};
  write_or_print(out, opt.metrics_path);
  return 0;
}

int cmd_train(const std::string& data_path, const std::string& algo, std::uint64_t split_seed,
              int features, const std::string& out_path) {
  const auto samples = matcher::load_dataset(data_path);
  const auto result =
      matcher::train(samples, matcher::algorithm_from_name(algo), features, split_seed);
  if (!out_path.empty()) matcher::save_model(out_path, result.model);
  nlohmann::json out{{"algorithm", algo},
                     {"features", features},
                     {"accuracy", result.metrics.accuracy},
                     {"f1", result.metrics.f1},
                     {"n_train", result.metrics.n_train},
                     {"n_test", result.metrics.n_test}};
  std::cout << out.dump(2) << "\n";
  return 0;
}

int cmd_gen_dataset(const std::string& out_path, int n, std::uint64_t seed,
                    const std::vector<std::string>& names) {
  std::vector<sim::Scenario> scenarios;
  if (names.empty()) {
    scenarios = sim::dataset_scenarios();
  } else {
    for (const auto& name : names) scenarios.push_back(sim::resolve_scenario(name));
  }
  sim::DatasetStats stats;
  const auto samples = sim::generate_matcher_dataset(scenarios, seed, n, &stats);
  matcher::save_dataset(out_path, samples);
  nlohmann::json out{{"path", out_path},
                     {"n_samples", stats.n_samples},
                     {"positive_fraction", stats.positive_fraction}};
  std::cout << out.dump(2) << "\n";
  return 0;
}

int cmd_ddc(const std::string& program_arg, const std::string& query_arg, int horizon,
            int samples, std::uint64_t seed) {
  dc::Program program = [&] {
    try {
      return dc::builtin_program(program_arg);
    } catch (const std::invalid_argument&) {
      return dc::Program::load(program_arg);
    }
  }();
  dc::Event event;
  if (!query_arg.empty()) {
    nlohmann::json spec;
    if (!query_arg.empty() && (query_arg.front() == '{' || query_arg.front() == '[')) {
      spec = nlohmann::json::parse(query_arg);
    } else {
      std::ifstream in(query_arg);
      if (!in) throw std::runtime_error("cannot open query file: " + query_arg);
      in >> spec;
    }
    event = dc::event_from_json(spec);
  }
  const double probability = dc::query(program, horizon, event, samples, seed);
  nlohmann::json out{{"probability", probability},
                     {"n_samples", samples},
                     {"horizon", horizon},
                     {"seed", seed}};
  std::cout << out.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"anchorworld: semantic world modeling with anchored objects,\n"
               "a relational particle filter and a clause-based sampler"};
  app.require_subcommand(1);

  // run
  RunOptions run_opt;
  auto* run = app.add_subcommand("run", "run a scenario through the world loop");
  run->add_option("--scenario", run_opt.scenario, "builtin scenario name or JSON path");
  run->add_option("--seed", run_opt.seed, "run seed");
  run->add_option("--particles", run_opt.particles, "particle count (default 2000)");
  run->add_option("--tracker", run_opt.tracker, "'on' or 'off'");
  run->add_option("--threshold", run_opt.threshold, "match acceptance threshold");
  run->add_option("--model", run_opt.model_path, "match model JSON");
  run->add_option("--trace", run_opt.trace_path, "per-frame JSONL trace output");
  run->add_option("--metrics", run_opt.metrics_path, "metrics JSON output");
  run->add_option("--config", run_opt.config_path, "JSON config with flag defaults");

  // train
  std::string train_data, train_algo = "logistic", train_out;
  std::uint64_t train_seed = 0;
  int train_features = 5;
  auto* train = app.add_subcommand("train", "train a match classifier on a dataset CSV");
  train->add_option("--data", train_data, "dataset CSV")->required();
  train->add_option("--algo", train_algo, "knn | bayes | logistic");
  train->add_option("--split-seed", train_seed, "70/30 split seed");
  train->add_option("--features", train_features, "5, or 4 to drop d_time");
  train->add_option("--out", train_out, "model JSON output");

  // gen-dataset
  std::string gen_out;
  int gen_n = kDefaultDatasetSize;
  std::uint64_t gen_seed = 0;
  std::vector<std::string> gen_scenarios;
  auto* gen = app.add_subcommand("gen-dataset", "generate a labeled match dataset CSV");
  gen->add_option("--out", gen_out, "CSV output path")->required();
  gen->add_option("--n", gen_n, "sample count");
  gen->add_option("--seed", gen_seed, "generation seed");
  gen->add_option("--scenarios", gen_scenarios, "scenario names (default: all)");

  // ddc
  std::string ddc_program, ddc_query;
  int ddc_horizon = 0, ddc_samples = 100000;
  std::uint64_t ddc_seed = 0;
  auto* ddc = app.add_subcommand("ddc", "estimate an event probability by forward sampling");
  ddc->add_option("--program", ddc_program, "builtin name (placement, drift) or JSON path")
      ->required();
  ddc->add_option("--query", ddc_query, "event JSON (inline or file); empty means 'true'");
  ddc->add_option("--horizon", ddc_horizon, "number of transition steps");
  ddc->add_option("--samples", ddc_samples, "Monte-Carlo sample count");
  ddc->add_option("--seed", ddc_seed, "sampling seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return e.get_exit_code() == 0 ? 0 : 2;
  }

  try {
    if (run->parsed()) return cmd_run(*run, run_opt);
    if (train->parsed()) return cmd_train(train_data, train_algo, train_seed, train_features,
                                          train_out);
    if (gen->parsed()) return cmd_gen_dataset(gen_out, gen_n, gen_seed, gen_scenarios);
    if (ddc->parsed()) return cmd_ddc(ddc_program, ddc_query, ddc_horizon, ddc_samples,
                                      ddc_seed);
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::runtime_error& e) {
    // file and format problems are usage errors; anything else is a runtime failure
    const std::string what = e.what();
    std::cerr << "error: " << what << "\n";
    if (what.rfind("cannot open", 0) == 0 || what.find("version mismatch") != std::string::npos ||
        what.find("malformed") != std::string::npos || what.find("parse") != std::string::npos)
      return 2;
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
