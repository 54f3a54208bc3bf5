#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "json.hpp"

#include "anchorworld/rng.hpp"

namespace anchorworld::dc {

// A sampled value: integer, real, symbol, or real vector.
using Value = std::variant<long long, double, std::string, std::vector<double>>;

bool value_equal(const Value& a, const Value& b);
double value_as_number(const Value& v);
long long value_as_integer(const Value& v);
std::string value_to_string(const Value& v);
nlohmann::json value_to_json(const Value& v);
Value value_from_json(const nlohmann::json& j);

// Arithmetic over constants and bound variables: number, {"var":"X"},
// {"add"|"sub"|"mul": [a, b]}.
struct Expr {
  enum class Kind { kConst, kVar, kAdd, kSub, kMul };
  Kind kind = Kind::kConst;
  Value constant = 0.0;
  std::string var;
  std::shared_ptr<const Expr> lhs, rhs;

  static Expr constant_of(Value v);
  static Expr variable(std::string name);
};

using Env = std::map<std::string, Value>;

// Evaluates under the bindings; throws naming `context` on unbound variables.
Value eval_expr(const Expr& e, const Env& env, const std::string& context);

struct FiniteOutcome {
  double probability = 0.0;
  Value value;
};

struct PoissonDist {
  Expr mean;
};
struct UniformDist {
  Expr low, high;
};
struct GaussianDist {
  std::vector<Expr> mean;       // one entry = scalar Gaussian
  Eigen::MatrixXd covariance;   // symmetric PSD, dim x dim
};
struct FiniteDist {
  std::vector<FiniteOutcome> outcomes;  // probabilities sum to 1
};

using Distribution = std::variant<PoissonDist, UniformDist, GaussianDist, FiniteDist>;

Value sample_distribution(const Distribution& dist, const Env& env, Rng& rng,
                          const std::string& context);

// Probability density (or mass) of `value` under a distribution whose
// parameters must be fully bound by `env`.
double density_at(const Distribution& dist, const Value& value, const Env& env = {});

// Prolog-style term: capitalized names are logic variables, anything else a
// constant symbol; numbers are constants.
struct Term {
  bool is_var = false;
  std::string var;
  Value constant;
};

enum class TimeRef { kNone, kCurrent, kNext };

struct RvRef {
  std::string name;
  std::vector<Term> args;
  TimeRef time = TimeRef::kNone;
};

struct Condition {
  enum class Kind { kBind, kBetween, kCompare };
  Kind kind = Kind::kBind;
  // bind: Var ~= rv(args)
  std::string bind_var;
  RvRef rv;
  // between(low, high, Var): grounds Var over the integer range
  Expr low, high;
  std::string range_var;
  // compare: lhs op rhs with op in {<, <=, >, >=, ==, !=}
  std::string cmp_op;
  Expr lhs, rhs;
};

// head ~ Distribution <- body. Head time is implied by the program section
// (static: none, initial: slice 0, transition: slice t+1).
struct Clause {
  std::string head;
  std::vector<Term> head_args;
  Distribution dist;
  std::vector<Condition> body;
};

/// Clauses partitioned into static, initial (slice 0) and transition
/// (t -> t+1) sections; document order is the dependency order per slice.
struct Program {
  std::vector<Clause> statics;
  std::vector<Clause> initials;
  std::vector<Clause> transitions;

  static Program from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
  static Program load(const std::string& path);
};

// Grounded random variable identity; time -1 marks static variables.
struct GroundKey {
  std::string name;
  std::vector<Value> args;
  int time = -1;

  bool operator<(const GroundKey& other) const;
  std::string to_string() const;
};

using World = std::map<GroundKey, Value>;

// Forward-samples every grounded variable for slices 0..horizon.
// Deterministic given the seed.
World sample_world(const Program& program, int horizon, std::uint64_t seed);

// Conjunction of ground conditions on a sampled world; an undefined variable
// makes the event false, not an error. Empty conjunction is `true`.
struct EventCondition {
  std::string name;
  std::vector<Value> args;
  std::optional<int> time;  // nullopt = static
  std::string op = "==";
  Value value;
};
using Event = std::vector<EventCondition>;

bool event_holds(const World& world, const Event& event);
Event event_from_json(const nlohmann::json& j);

// Monte-Carlo probability estimate: fraction of n_samples worlds satisfying
// the event. Per-world seeds derive from (seed, index), so the serial and
// parallel paths count identically.
double query(const Program& program, int horizon, const Event& event, int n_samples,
             std::uint64_t seed, ExecutionMode mode = ExecutionMode::kParallel);

// Bundled demo programs (also valid Program JSON): "placement" scatters a
// Poisson number of objects uniformly and defines a left-of relation;
// "drift" gives each object +3 per step dynamics.
const char* builtin_program_json(const std::string& name);
Program builtin_program(const std::string& name);

}  // namespace anchorworld::dc
