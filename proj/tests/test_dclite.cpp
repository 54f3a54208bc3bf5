#include "doctest.h"

#include <cmath>

#include "anchorworld/dclite.hpp"

using namespace anchorworld;
using namespace anchorworld::dc;

namespace {

// P(left(1,2)=t) for the placement program, analytically:
// P(n >= 2) * P(pos1 < pos2) * 0.99 with n ~ Poisson(6).
double placement_left_probability() {
  const double p_n_ge_2 = 1.0 - 7.0 * std::exp(-6.0);
  return p_n_ge_2 * 0.5 * 0.99;
}

Event left_event() {
  return {{"left", {Value(1LL), Value(2LL)}, std::nullopt, "==", Value(std::string("t"))}};
}

}  // namespace

TEST_CASE("poisson clause reproduces its mean over many worlds") {
  const auto program = builtin_program("placement");
  const int n = 100000;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    const World w = sample_world(program, 0, derive_seed(11, i));
    sum += double(std::get<long long>(w.at({"n", {}, -1})));
  }
  CHECK(std::abs(sum / n - 6.0) < 0.05);
}

TEST_CASE("degenerate categorical always yields its single outcome") {
  const auto program = Program::from_json(nlohmann::json::parse(R"({
    "static": [{"head": "x", "args": [],
                "dist": {"tag": "finite", "params": {"outcomes": [{"p": 1.0, "value": "a"}]}},
                "body": []}]})"));
  for (int i = 0; i < 200; ++i) {
    const World w = sample_world(program, 0, derive_seed(5, i));
    CHECK(std::get<std::string>(w.at({"x", {}, -1})) == "a");
  }
}

TEST_CASE("noise-free drift advances exactly three units per step") {
  auto j = nlohmann::json::parse(builtin_program_json("drift"));
  j["transition"][0]["dist"]["params"]["covariance"] = 0.0;
  const auto program = Program::from_json(j);
  const int horizon = 100;
  const World w = sample_world(program, horizon, 2024);
  const long long n = std::get<long long>(w.at({"n", {}, -1}));
  REQUIRE(n >= 1);
  for (long long p = 1; p <= n; ++p) {
    for (int t = 0; t < horizon; ++t) {
      const double now = std::get<double>(w.at({"pos", {Value(p)}, t}));
      const double next = std::get<double>(w.at({"pos", {Value(p)}, t + 1}));
      CHECK(next == now + 3.0);  // exact, not approximate
    }
  }
}

TEST_CASE("left(1,2) query matches the analytic symmetry oracle") {
  const auto program = builtin_program("placement");
  const double p_true = placement_left_probability();
  const int n = 100000;
  const double estimate = query(program, 0, left_event(), n, 3);
  const double four_sigma = 4.0 * std::sqrt(p_true * (1.0 - p_true) / n);
  CHECK(std::abs(estimate - p_true) < four_sigma);
  // the coarser two-digit symmetry bound
  CHECK(std::abs(estimate - 0.495) < 0.01);
}

TEST_CASE("trivial queries behave") {
  const auto program = builtin_program("placement");
  CHECK(query(program, 0, {}, 1000, 9) == 1.0);  // P(true)
  const Event nonneg{{"n", {}, std::nullopt, ">=", Value(0LL)}};
  CHECK(query(program, 0, nonneg, 1000, 9) == 1.0);  // Poisson support
}

TEST_CASE("density evaluations match closed forms") {
  // standard 3-D gaussian at the origin: (2*pi)^(-3/2)
  GaussianDist g;
  g.mean = {Expr::constant_of(0.0), Expr::constant_of(0.0), Expr::constant_of(0.0)};
  g.covariance = Eigen::MatrixXd::Identity(3, 3);
  CHECK(density_at(Distribution(g), Value(std::vector<double>{0, 0, 0})) ==
        doctest::Approx(0.06349363593424097).epsilon(1e-9));

  UniformDist u{Expr::constant_of(0.0), Expr::constant_of(2.0)};
  CHECK(density_at(Distribution(u), Value(1.0)) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(density_at(Distribution(u), Value(3.0)) == 0.0);

  FiniteDist f;
  f.outcomes = {{0.99, Value(std::string("t"))}, {0.01, Value(std::string("f"))}};
  CHECK(density_at(Distribution(f), Value(std::string("f"))) == 0.01);
  CHECK(density_at(Distribution(f), Value(std::string("zzz"))) == 0.0);  // outside support

  PoissonDist pois{Expr::constant_of(6.0)};
  // 6^6 e^-6 / 6! by direct evaluation
  CHECK(density_at(Distribution(pois), Value(6LL)) ==
        doctest::Approx(0.16062314104798003).epsilon(1e-9));
  CHECK(density_at(Distribution(pois), Value(-1LL)) == 0.0);
}

TEST_CASE("events on undefined grounded variables are false, not errors") {
  const auto program = builtin_program("placement");
  // pos(999) is essentially never defined (would need n >= 999)
  const Event ev{{"pos", {Value(999LL)}, std::nullopt, ">=", Value(0.0)}};
  CHECK(query(program, 0, ev, 2000, 13) == 0.0);
}

TEST_CASE("pos is defined exactly for indices 1..n") {
  const auto program = builtin_program("placement");
  for (int i = 0; i < 50; ++i) {
    const World w = sample_world(program, 0, derive_seed(21, i));
    const long long n = std::get<long long>(w.at({"n", {}, -1}));
    long long count = 0;
    for (const auto& [key, value] : w)
      if (key.name == "pos") ++count;
    CHECK(count == n);
    for (long long p = 1; p <= n; ++p) CHECK(w.contains({"pos", {Value(p)}, -1}));
    CHECK_FALSE(w.contains({"pos", {Value(n + 1)}, -1}));
  }
}

TEST_CASE("unbound variables in conditions raise an error naming the clause") {
  const auto program = Program::from_json(nlohmann::json::parse(R"({
    "static": [{"head": "bad", "args": [],
                "dist": {"tag": "uniform", "params": {"low": 0, "high": 1}},
                "body": [{"compare": {"op": "<", "lhs": {"var": "Missing"}, "rhs": 1}}]}]})"));
  try {
    sample_world(program, 0, 1);
    FAIL("expected an unbound-variable error");
  } catch (const std::runtime_error& e) {
    const std::string what = e.what();
    CHECK(what.find("bad") != std::string::npos);
    CHECK(what.find("Missing") != std::string::npos);
  }
}

TEST_CASE("identical program and seed give bit-identical worlds") {
  const auto program = builtin_program("drift");
  const World a = sample_world(program, 20, 777);
  const World b = sample_world(program, 20, 777);
  REQUIRE(a.size() == b.size());
  auto ia = a.begin();
  auto ib = b.begin();
  for (; ia != a.end(); ++ia, ++ib) {
    CHECK(ia->first.to_string() == ib->first.to_string());
    CHECK(value_to_string(ia->second) == value_to_string(ib->second));
    CHECK(value_equal(ia->second, ib->second));
  }
}

TEST_CASE("serial and parallel query agree exactly") {
  const auto program = builtin_program("placement");
  const double serial = query(program, 0, left_event(), 20000, 31, ExecutionMode::kSerial);
  const double parallel = query(program, 0, left_event(), 20000, 31, ExecutionMode::kParallel);
  CHECK(serial == parallel);
}

TEST_CASE("changing transition clauses leaves slice zero untouched") {
  auto j = nlohmann::json::parse(builtin_program_json("drift"));
  const auto base = Program::from_json(j);
  j["transition"][0]["dist"]["params"]["covariance"] = 25.0;
  j["transition"][0]["dist"]["params"]["mean"] = {{"add", {{{"var", "X"}}, -17}}};
  const auto modified = Program::from_json(j);
  for (int i = 0; i < 20; ++i) {
    const World wa = sample_world(base, 5, derive_seed(37, i));
    const World wb = sample_world(modified, 5, derive_seed(37, i));
    // every slice-0 and static variable matches exactly
    for (const auto& [key, value] : wa) {
      if (key.time > 0) continue;
      REQUIRE(wb.contains(key));
      CHECK(value_equal(wb.at(key), value));
    }
  }
}

TEST_CASE("monte-carlo estimates concentrate at the analytic rate") {
  const auto program = builtin_program("placement");
  const double p_true = placement_left_probability();
  int failures_small = 0;
  for (int seed = 0; seed < 20; ++seed) {
    const double est = query(program, 0, left_event(), 10000, derive_seed(100, seed));
    if (std::abs(est - p_true) > 3.0 * std::sqrt(p_true * (1.0 - p_true) / 10000))
      ++failures_small;
  }
  CHECK(failures_small <= 1);  // 3-sigma: ~0.27% expected failure rate per seed

  int failures_large = 0;
  for (int seed = 0; seed < 3; ++seed) {
    const double est = query(program, 0, left_event(), 100000, derive_seed(200, seed));
    if (std::abs(est - p_true) > 3.0 * std::sqrt(p_true * (1.0 - p_true) / 100000))
      ++failures_large;
  }
  CHECK(failures_large == 0);
}

TEST_CASE("program JSON round-trip preserves sampling behavior") {
  const auto program = builtin_program("placement");
  const auto round_tripped = Program::from_json(program.to_json());
  for (int i = 0; i < 10; ++i) {
    const World a = sample_world(program, 0, derive_seed(55, i));
    const World b = sample_world(round_tripped, 0, derive_seed(55, i));
    REQUIRE(a.size() == b.size());
    for (const auto& [key, value] : a) CHECK(value_equal(b.at(key), value));
  }
}

TEST_CASE("invalid programs are rejected at parse time") {
  CHECK_THROWS(Program::from_json(nlohmann::json::parse(R"({"static": []})")));
  // finite weights must sum to one
  CHECK_THROWS(Program::from_json(nlohmann::json::parse(R"({
    "static": [{"head": "x", "args": [],
                "dist": {"tag": "finite", "params": {"outcomes": [{"p": 0.5, "value": "a"}]}},
                "body": []}]})")));
  // covariance must be symmetric
  CHECK_THROWS(Program::from_json(nlohmann::json::parse(R"({
    "static": [{"head": "x", "args": [],
                "dist": {"tag": "gaussian",
                         "params": {"mean": [0, 0], "covariance": [[1, 0.5], [0.1, 1]]}},
                "body": []}]})")));
}

TEST_CASE("gaussian parameters may reference bound variables") {
  // y ~ gaussian(X + 3, 0) where X ~= x, x ~ uniform(5, 5.000001)
  const auto program = Program::from_json(nlohmann::json::parse(R"({
    "static": [
      {"head": "x", "args": [],
       "dist": {"tag": "uniform", "params": {"low": 5.0, "high": 5.000001}}, "body": []},
      {"head": "y", "args": [],
       "dist": {"tag": "gaussian", "params": {"mean": {"add": [{"var": "X"}, 3]},
                                              "covariance": 0.0}},
       "body": [{"bind": "X", "rv": {"name": "x", "args": [], "time": null}}]}
    ]})"));
  const World w = sample_world(program, 0, 1);
  const double x = std::get<double>(w.at({"x", {}, -1}));
  const double y = std::get<double>(w.at({"y", {}, -1}));
  CHECK(y == x + 3.0);
}
