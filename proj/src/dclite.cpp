#include "anchorworld/dclite.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <Eigen/Dense>

namespace anchorworld::dc {

namespace {

constexpr double kFiniteWeightTolerance = 1e-9;

bool is_variable_token(const std::string& s) {
  return !s.empty() && (std::isupper(static_cast<unsigned char>(s[0])) || s[0] == '_');
}

[[noreturn]] void fail(const std::string& context, const std::string& message) {
  throw std::runtime_error("clause '" + context + "': " + message);
}

}  // namespace

bool value_equal(const Value& a, const Value& b) {
  const bool a_num = a.index() <= 1;
  const bool b_num = b.index() <= 1;
  if (a_num && b_num) return value_as_number(a) == value_as_number(b);
  return a == b;
}

double value_as_number(const Value& v) {
  if (std::holds_alternative<long long>(v)) return static_cast<double>(std::get<long long>(v));
  if (std::holds_alternative<double>(v)) return std::get<double>(v);
  throw std::runtime_error("value is not numeric: " + value_to_string(v));
}

long long value_as_integer(const Value& v) {
  if (std::holds_alternative<long long>(v)) return std::get<long long>(v);
  if (std::holds_alternative<double>(v)) {
    const double d = std::get<double>(v);
    const double r = std::round(d);
    if (std::abs(d - r) > 1e-9) throw std::runtime_error("value is not an integer");
    return static_cast<long long>(r);
  }
  throw std::runtime_error("value is not an integer: " + value_to_string(v));
}

std::string value_to_string(const Value& v) {
  std::ostringstream out;
  if (std::holds_alternative<long long>(v)) out << std::get<long long>(v);
  else if (std::holds_alternative<double>(v)) out << std::get<double>(v);
  else if (std::holds_alternative<std::string>(v)) out << std::get<std::string>(v);
  else {
    out << "[";
    const auto& vec = std::get<std::vector<double>>(v);
    for (std::size_t i = 0; i < vec.size(); ++i) out << (i ? "," : "") << vec[i];
    out << "]";
  }
  return out.str();
}

nlohmann::json value_to_json(const Value& v) {
  if (std::holds_alternative<long long>(v)) return std::get<long long>(v);
  if (std::holds_alternative<double>(v)) return std::get<double>(v);
  if (std::holds_alternative<std::string>(v)) return std::get<std::string>(v);
  return std::get<std::vector<double>>(v);
}

Value value_from_json(const nlohmann::json& j) {
  if (j.is_number_integer()) return j.get<long long>();
  if (j.is_number_float()) return j.get<double>();
  if (j.is_string()) return j.get<std::string>();
  if (j.is_array()) return j.get<std::vector<double>>();
  if (j.is_boolean()) return std::string(j.get<bool>() ? "t" : "f");
  throw std::runtime_error("cannot interpret JSON value: " + j.dump());
}

Expr Expr::constant_of(Value v) {
  Expr e;
  e.kind = Kind::kConst;
  e.constant = std::move(v);
  return e;
}

Expr Expr::variable(std::string name) {
  Expr e;
  e.kind = Kind::kVar;
  e.var = std::move(name);
  return e;
}

Value eval_expr(const Expr& e, const Env& env, const std::string& context) {
  switch (e.kind) {
    case Expr::Kind::kConst:
      return e.constant;
    case Expr::Kind::kVar: {
      auto it = env.find(e.var);
      if (it == env.end()) fail(context, "unbound variable '" + e.var + "'");
      return it->second;
    }
    case Expr::Kind::kAdd:
    case Expr::Kind::kSub:
    case Expr::Kind::kMul: {
      const Value a = eval_expr(*e.lhs, env, context);
      const Value b = eval_expr(*e.rhs, env, context);
      // stay integral when both operands are
      if (std::holds_alternative<long long>(a) && std::holds_alternative<long long>(b)) {
        const long long x = std::get<long long>(a), y = std::get<long long>(b);
        if (e.kind == Expr::Kind::kAdd) return x + y;
        if (e.kind == Expr::Kind::kSub) return x - y;
        return x * y;
      }
      const double x = value_as_number(a), y = value_as_number(b);
      if (e.kind == Expr::Kind::kAdd) return x + y;
      if (e.kind == Expr::Kind::kSub) return x - y;
      return x * y;
    }
  }
  throw std::logic_error("unreachable");
}

namespace {

// ---------- JSON parsing ----------

Expr expr_from_json(const nlohmann::json& j) {
  if (j.is_number() || j.is_array()) return Expr::constant_of(value_from_json(j));
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    return is_variable_token(s) ? Expr::variable(s) : Expr::constant_of(Value(s));
  }
  if (j.is_object()) {
    if (j.contains("var")) return Expr::variable(j.at("var").get<std::string>());
    for (const char* op : {"add", "sub", "mul"}) {
      if (j.contains(op)) {
        const auto& args = j.at(op);
        if (!args.is_array() || args.size() != 2)
          throw std::runtime_error(std::string("expression '") + op + "' needs two operands");
        Expr e;
        e.kind = op[0] == 'a' ? Expr::Kind::kAdd
                              : (op[0] == 's' ? Expr::Kind::kSub : Expr::Kind::kMul);
        e.lhs = std::make_shared<Expr>(expr_from_json(args[0]));
        e.rhs = std::make_shared<Expr>(expr_from_json(args[1]));
        return e;
      }
    }
  }
  throw std::runtime_error("cannot parse expression: " + j.dump());
}

nlohmann::json expr_to_json(const Expr& e) {
  switch (e.kind) {
    case Expr::Kind::kConst: return value_to_json(e.constant);
    case Expr::Kind::kVar: return nlohmann::json{{"var", e.var}};
    case Expr::Kind::kAdd: return nlohmann::json{{"add", {expr_to_json(*e.lhs), expr_to_json(*e.rhs)}}};
    case Expr::Kind::kSub: return nlohmann::json{{"sub", {expr_to_json(*e.lhs), expr_to_json(*e.rhs)}}};
    case Expr::Kind::kMul: return nlohmann::json{{"mul", {expr_to_json(*e.lhs), expr_to_json(*e.rhs)}}};
  }
  throw std::logic_error("unreachable");
}

Term term_from_json(const nlohmann::json& j) {
  Term t;
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (is_variable_token(s)) {
      t.is_var = true;
      t.var = s;
    } else {
      t.constant = Value(s);
    }
  } else {
    t.constant = value_from_json(j);
  }
  return t;
}

nlohmann::json term_to_json(const Term& t) {
  if (t.is_var) return t.var;
  return value_to_json(t.constant);
}

TimeRef time_from_json(const nlohmann::json& j) {
  if (j.is_null()) return TimeRef::kNone;
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "t") return TimeRef::kCurrent;
    if (s == "t+1") return TimeRef::kNext;
  }
  if (j.is_number_integer() && j.get<int>() == 0) return TimeRef::kCurrent;
  throw std::runtime_error("cannot parse time reference: " + j.dump());
}

nlohmann::json time_to_json(TimeRef t) {
  switch (t) {
    case TimeRef::kNone: return nullptr;
    case TimeRef::kCurrent: return "t";
    case TimeRef::kNext: return "t+1";
  }
  return nullptr;
}

RvRef rv_from_json(const nlohmann::json& j) {
  RvRef rv;
  rv.name = j.at("name").get<std::string>();
  if (j.contains("args"))
    for (const auto& a : j.at("args")) rv.args.push_back(term_from_json(a));
  if (j.contains("time")) rv.time = time_from_json(j.at("time"));
  return rv;
}

nlohmann::json rv_to_json(const RvRef& rv) {
  nlohmann::json args = nlohmann::json::array();
  for (const auto& a : rv.args) args.push_back(term_to_json(a));
  return nlohmann::json{{"name", rv.name}, {"args", args}, {"time", time_to_json(rv.time)}};
}

Condition condition_from_json(const nlohmann::json& j) {
  Condition c;
  if (j.contains("bind")) {
    c.kind = Condition::Kind::kBind;
    c.bind_var = j.at("bind").get<std::string>();
    c.rv = rv_from_json(j.at("rv"));
    return c;
  }
  if (j.contains("between")) {
    const auto& b = j.at("between");
    if (!b.is_array() || b.size() != 3)
      throw std::runtime_error("'between' needs [low, high, Var]");
    c.kind = Condition::Kind::kBetween;
    c.low = expr_from_json(b[0]);
    c.high = expr_from_json(b[1]);
    c.range_var = b[2].get<std::string>();
    if (!is_variable_token(c.range_var))
      throw std::runtime_error("'between' third argument must be a variable");
    return c;
  }
  if (j.contains("compare")) {
    const auto& cmp = j.at("compare");
    c.kind = Condition::Kind::kCompare;
    c.cmp_op = cmp.at("op").get<std::string>();
    c.lhs = expr_from_json(cmp.at("lhs"));
    c.rhs = expr_from_json(cmp.at("rhs"));
    return c;
  }
  throw std::runtime_error("cannot parse body condition: " + j.dump());
}

nlohmann::json condition_to_json(const Condition& c) {
  switch (c.kind) {
    case Condition::Kind::kBind:
      return nlohmann::json{{"bind", c.bind_var}, {"rv", rv_to_json(c.rv)}};
    case Condition::Kind::kBetween:
      return nlohmann::json{
          {"between", {expr_to_json(c.low), expr_to_json(c.high), c.range_var}}};
    case Condition::Kind::kCompare:
      return nlohmann::json{{"compare",
                             {{"op", c.cmp_op}, {"lhs", expr_to_json(c.lhs)},
                              {"rhs", expr_to_json(c.rhs)}}}};
  }
  throw std::logic_error("unreachable");
}

Eigen::MatrixXd covariance_from_json(const nlohmann::json& j) {
  Eigen::MatrixXd cov;
  if (j.is_number()) {
    cov.resize(1, 1);
    cov(0, 0) = j.get<double>();
  } else if (j.is_array()) {
    const auto rows = j.get<std::vector<std::vector<double>>>();
    const std::size_t n = rows.size();
    cov.resize(n, n);
    for (std::size_t r = 0; r < n; ++r) {
      if (rows[r].size() != n) throw std::runtime_error("covariance must be square");
      for (std::size_t col = 0; col < n; ++col) cov(r, col) = rows[r][col];
    }
  } else {
    throw std::runtime_error("cannot parse covariance: " + j.dump());
  }
  if (!cov.isApprox(cov.transpose(), 1e-9))
    throw std::runtime_error("covariance must be symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  if (es.eigenvalues().minCoeff() < -1e-9)
    throw std::runtime_error("covariance must be positive semi-definite");
  return cov;
}

Distribution distribution_from_json(const nlohmann::json& j) {
  const auto tag = j.at("tag").get<std::string>();
  const auto& params = j.at("params");
  if (tag == "poisson") return PoissonDist{expr_from_json(params.at("mean"))};
  if (tag == "uniform")
    return UniformDist{expr_from_json(params.at("low")), expr_from_json(params.at("high"))};
  if (tag == "gaussian") {
    GaussianDist g;
    const auto& mean = params.at("mean");
    if (mean.is_array()) {
      for (const auto& m : mean) g.mean.push_back(expr_from_json(m));
    } else {
      g.mean.push_back(expr_from_json(mean));
    }
    if (g.mean.empty()) throw std::runtime_error("gaussian mean must not be empty");
    g.covariance = covariance_from_json(params.at("covariance"));
    if (static_cast<std::size_t>(g.covariance.rows()) != g.mean.size())
      throw std::runtime_error("gaussian covariance dimension mismatch");
    return g;
  }
  if (tag == "finite") {
    FiniteDist f;
    double total = 0.0;
    for (const auto& o : params.at("outcomes")) {
      FiniteOutcome outcome;
      outcome.probability = o.at("p").get<double>();
      if (outcome.probability < 0.0)
        throw std::runtime_error("finite outcome probability must be >= 0");
      outcome.value = value_from_json(o.at("value"));
      total += outcome.probability;
      f.outcomes.push_back(std::move(outcome));
    }
    if (std::abs(total - 1.0) > kFiniteWeightTolerance)
      throw std::runtime_error("finite outcome probabilities must sum to 1");
    return f;
  }
  throw std::runtime_error("unknown distribution tag: " + tag);
}

nlohmann::json distribution_to_json(const Distribution& dist) {
  nlohmann::json j;
  if (const auto* p = std::get_if<PoissonDist>(&dist)) {
    j = {{"tag", "poisson"}, {"params", {{"mean", expr_to_json(p->mean)}}}};
  } else if (const auto* u = std::get_if<UniformDist>(&dist)) {
    j = {{"tag", "uniform"},
         {"params", {{"low", expr_to_json(u->low)}, {"high", expr_to_json(u->high)}}}};
  } else if (const auto* g = std::get_if<GaussianDist>(&dist)) {
    nlohmann::json mean;
    if (g->mean.size() == 1) {
      mean = expr_to_json(g->mean[0]);
    } else {
      mean = nlohmann::json::array();
      for (const auto& m : g->mean) mean.push_back(expr_to_json(m));
    }
    nlohmann::json cov;
    if (g->covariance.rows() == 1) {
      cov = g->covariance(0, 0);
    } else {
      cov = nlohmann::json::array();
      for (Eigen::Index r = 0; r < g->covariance.rows(); ++r) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index c = 0; c < g->covariance.cols(); ++c) row.push_back(g->covariance(r, c));
        cov.push_back(row);
      }
    }
    j = {{"tag", "gaussian"}, {"params", {{"mean", mean}, {"covariance", cov}}}};
  } else if (const auto* f = std::get_if<FiniteDist>(&dist)) {
    nlohmann::json outcomes = nlohmann::json::array();
    for (const auto& o : f->outcomes)
      outcomes.push_back({{"p", o.probability}, {"value", value_to_json(o.value)}});
    j = {{"tag", "finite"}, {"params", {{"outcomes", outcomes}}}};
  }
  return j;
}

Clause clause_from_json(const nlohmann::json& j) {
  Clause c;
  c.head = j.at("head").get<std::string>();
  if (j.contains("args"))
    for (const auto& a : j.at("args")) c.head_args.push_back(term_from_json(a));
  c.dist = distribution_from_json(j.at("dist"));
  if (j.contains("body"))
    for (const auto& b : j.at("body")) c.body.push_back(condition_from_json(b));
  return c;
}

nlohmann::json clause_to_json(const Clause& c) {
  nlohmann::json args = nlohmann::json::array();
  for (const auto& a : c.head_args) args.push_back(term_to_json(a));
  nlohmann::json body = nlohmann::json::array();
  for (const auto& b : c.body) body.push_back(condition_to_json(b));
  return nlohmann::json{
      {"head", c.head}, {"args", args}, {"dist", distribution_to_json(c.dist)}, {"body", body}};
}

// ---------- grounding and sampling ----------

struct SliceContext {
  int head_time = -1;     // time index assigned to sampled heads
  int current_time = -2;  // -2 marks "not available in this section"
  int next_time = -2;
};

int resolve_rv_time(const RvRef& rv, const SliceContext& ctx, const World& world,
                    const std::string& context) {
  switch (rv.time) {
    case TimeRef::kCurrent:
      if (ctx.current_time == -2) fail(context, "time reference 't' outside a temporal section");
      return ctx.current_time;
    case TimeRef::kNext:
      if (ctx.next_time == -2) fail(context, "time reference 't+1' outside a transition");
      return ctx.next_time;
    case TimeRef::kNone: {
      // Untimed references resolve to a static variable when one exists,
      // otherwise to the head's slice.
      GroundKey probe{rv.name, {}, -1};
      auto it = world.lower_bound(probe);
      if (it != world.end() && it->first.name == rv.name && it->first.time == -1) return -1;
      return ctx.head_time;
    }
  }
  return -1;
}

bool numeric_compare(const std::string& op, const Value& lhs, const Value& rhs,
                     const std::string& context) {
  if (op == "==") return value_equal(lhs, rhs);
  if (op == "!=") return !value_equal(lhs, rhs);
  const double a = [&] {
    try {
      return value_as_number(lhs);
    } catch (const std::exception&) {
      fail(context, "comparison '" + op + "' needs numeric operands");
    }
  }();
  const double b = [&] {
    try {
      return value_as_number(rhs);
    } catch (const std::exception&) {
      fail(context, "comparison '" + op + "' needs numeric operands");
    }
  }();
  if (op == "<") return a < b;
  if (op == "<=") return a <= b;
  if (op == ">") return a > b;
  if (op == ">=") return a >= b;
  fail(context, "unknown comparison operator '" + op + "'");
}

void expand_condition(const World& world, const Condition& cond, const SliceContext& ctx,
                      const std::string& context, const std::vector<Env>& in,
                      std::vector<Env>& out) {
  for (const Env& env : in) {
    switch (cond.kind) {
      case Condition::Kind::kBind: {
        const int time = resolve_rv_time(cond.rv, ctx, world, context);
        // substitute args; collect unbound positions
        std::vector<Value> ground_args(cond.rv.args.size());
        std::vector<std::size_t> free_positions;
        for (std::size_t i = 0; i < cond.rv.args.size(); ++i) {
          const Term& t = cond.rv.args[i];
          if (!t.is_var) {
            ground_args[i] = t.constant;
          } else if (auto it = env.find(t.var); it != env.end()) {
            ground_args[i] = it->second;
          } else {
            free_positions.push_back(i);
          }
        }
        // Unifies the pattern against a grounded instance, extending env;
        // repeated variables must agree across positions.
        auto try_entry = [&](const std::vector<Value>& args, const Value& sampled) {
          Env extended = env;
          for (std::size_t i = 0; i < args.size(); ++i) {
            const Term& t = cond.rv.args[i];
            if (!t.is_var) {
              if (!value_equal(t.constant, args[i])) return;
            } else if (auto it = extended.find(t.var); it != extended.end()) {
              if (!value_equal(it->second, args[i])) return;
            } else {
              extended[t.var] = args[i];
            }
          }
          if (auto it = extended.find(cond.bind_var); it != extended.end()) {
            if (!value_equal(it->second, sampled)) return;
          } else {
            extended[cond.bind_var] = sampled;
          }
          out.push_back(std::move(extended));
        };
        if (free_positions.empty()) {
          auto it = world.find(GroundKey{cond.rv.name, ground_args, time});
          if (it != world.end()) try_entry(ground_args, it->second);
        } else {
          // unify against every grounded instance of this variable
          GroundKey probe{cond.rv.name, {}, time};
          for (auto it = world.lower_bound(probe);
               it != world.end() && it->first.name == cond.rv.name && it->first.time == time;
               ++it) {
            if (it->first.args.size() != cond.rv.args.size()) continue;
            try_entry(it->first.args, it->second);
          }
        }
        break;
      }
      case Condition::Kind::kBetween: {
        const long long lo = value_as_integer(eval_expr(cond.low, env, context));
        const long long hi = value_as_integer(eval_expr(cond.high, env, context));
        if (auto it = env.find(cond.range_var); it != env.end()) {
          const long long v = value_as_integer(it->second);
          if (v >= lo && v <= hi) out.push_back(env);
        } else {
          for (long long v = lo; v <= hi; ++v) {
            Env extended = env;
            extended[cond.range_var] = v;
            out.push_back(std::move(extended));
          }
        }
        break;
      }
      case Condition::Kind::kCompare: {
        const Value lhs = eval_expr(cond.lhs, env, context);
        const Value rhs = eval_expr(cond.rhs, env, context);
        if (numeric_compare(cond.cmp_op, lhs, rhs, context)) out.push_back(env);
        break;
      }
    }
  }
}

void apply_clause(World& world, const Clause& clause, const SliceContext& ctx, Rng& rng) {
  std::vector<Env> envs{Env{}};
  std::vector<Env> next;
  for (const Condition& cond : clause.body) {
    next.clear();
    expand_condition(world, cond, ctx, clause.head, envs, next);
    envs.swap(next);
    if (envs.empty()) return;
  }
  for (const Env& env : envs) {
    std::vector<Value> args(clause.head_args.size());
    for (std::size_t i = 0; i < clause.head_args.size(); ++i) {
      const Term& t = clause.head_args[i];
      if (!t.is_var) {
        args[i] = t.constant;
      } else if (auto it = env.find(t.var); it != env.end()) {
        args[i] = it->second;
      } else {
        fail(clause.head, "unbound variable '" + t.var + "' in clause head");
      }
    }
    GroundKey key{clause.head, std::move(args), ctx.head_time};
    if (world.contains(key))
      fail(clause.head, "random variable defined twice: " + key.to_string());
    Value sampled = sample_distribution(clause.dist, env, rng, clause.head);
    world.emplace(std::move(key), std::move(sampled));
  }
}

}  // namespace

Value sample_distribution(const Distribution& dist, const Env& env, Rng& rng,
                          const std::string& context) {
  if (const auto* p = std::get_if<PoissonDist>(&dist)) {
    const double mean = value_as_number(eval_expr(p->mean, env, context));
    return rng.poisson(mean);
  }
  if (const auto* u = std::get_if<UniformDist>(&dist)) {
    const double low = value_as_number(eval_expr(u->low, env, context));
    const double high = value_as_number(eval_expr(u->high, env, context));
    return rng.uniform(low, high);
  }
  if (const auto* g = std::get_if<GaussianDist>(&dist)) {
    const Eigen::Index dim = g->covariance.rows();
    Eigen::VectorXd mean(dim);
    for (Eigen::Index i = 0; i < dim; ++i)
      mean[i] = value_as_number(eval_expr(g->mean[i], env, context));
    Eigen::MatrixXd root;
    if (g->covariance.isZero(0.0)) {
      root = Eigen::MatrixXd::Zero(dim, dim);
    } else {
      Eigen::LLT<Eigen::MatrixXd> llt(g->covariance);
      if (llt.info() == Eigen::Success) {
        root = llt.matrixL();
      } else {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(g->covariance);
        root = es.eigenvectors() *
               es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
      }
    }
    Eigen::VectorXd z(dim);
    for (Eigen::Index i = 0; i < dim; ++i) z[i] = rng.normal();
    const Eigen::VectorXd x = mean + root * z;
    if (dim == 1) return x[0];
    return std::vector<double>(x.data(), x.data() + dim);
  }
  const auto& f = std::get<FiniteDist>(dist);
  const double u = rng.uniform01();
  double cumulative = 0.0;
  for (const auto& outcome : f.outcomes) {
    cumulative += outcome.probability;
    if (u < cumulative) return outcome.value;
  }
  return f.outcomes.back().value;
}

double density_at(const Distribution& dist, const Value& value, const Env& env) {
  static const std::string context = "density_at";
  if (const auto* p = std::get_if<PoissonDist>(&dist)) {
    const double mean = value_as_number(eval_expr(p->mean, env, context));
    long long k;
    try {
      k = value_as_integer(value);
    } catch (const std::exception&) {
      return 0.0;
    }
    if (k < 0) return 0.0;
    return std::exp(double(k) * std::log(mean) - mean - std::lgamma(double(k) + 1.0));
  }
  if (const auto* u = std::get_if<UniformDist>(&dist)) {
    const double low = value_as_number(eval_expr(u->low, env, context));
    const double high = value_as_number(eval_expr(u->high, env, context));
    const double x = value_as_number(value);
    return (x >= low && x <= high) ? 1.0 / (high - low) : 0.0;
  }
  if (const auto* g = std::get_if<GaussianDist>(&dist)) {
    const Eigen::Index dim = g->covariance.rows();
    Eigen::VectorXd mean(dim), x(dim);
    for (Eigen::Index i = 0; i < dim; ++i)
      mean[i] = value_as_number(eval_expr(g->mean[i], env, context));
    if (dim == 1) {
      x[0] = value_as_number(value);
    } else {
      const auto& vec = std::get<std::vector<double>>(value);
      if (static_cast<Eigen::Index>(vec.size()) != dim)
        throw std::invalid_argument("gaussian density: dimension mismatch");
      for (Eigen::Index i = 0; i < dim; ++i) x[i] = vec[i];
    }
    Eigen::LLT<Eigen::MatrixXd> llt(g->covariance);
    if (llt.info() != Eigen::Success)
      throw std::invalid_argument("gaussian density: degenerate covariance");
    const Eigen::VectorXd diff = x - mean;
    const double quadratic = diff.dot(llt.solve(diff));
    double log_det = 0.0;
    for (Eigen::Index i = 0; i < dim; ++i)
      log_det += 2.0 * std::log(Eigen::MatrixXd(llt.matrixL())(i, i));
    return std::exp(-0.5 * (double(dim) * std::log(2.0 * M_PI) + log_det + quadratic));
  }
  const auto& f = std::get<FiniteDist>(dist);
  for (const auto& outcome : f.outcomes)
    if (value_equal(outcome.value, value)) return outcome.probability;
  return 0.0;
}

bool GroundKey::operator<(const GroundKey& other) const {
  if (name != other.name) return name < other.name;
  if (time != other.time) return time < other.time;
  return args < other.args;
}

std::string GroundKey::to_string() const {
  std::ostringstream out;
  out << name;
  if (!args.empty()) {
    out << "(";
    for (std::size_t i = 0; i < args.size(); ++i)
      out << (i ? "," : "") << value_to_string(args[i]);
    out << ")";
  }
  if (time >= 0) out << "_" << time;
  return out.str();
}

Program Program::from_json(const nlohmann::json& j) {
  Program p;
  auto read = [&](const char* key, std::vector<Clause>& into) {
    if (!j.contains(key)) return;
    for (const auto& c : j.at(key)) into.push_back(clause_from_json(c));
  };
  read("static", p.statics);
  read("initial", p.initials);
  read("transition", p.transitions);
  if (p.statics.empty() && p.initials.empty() && p.transitions.empty())
    throw std::runtime_error("program defines no clauses");
  return p;
}

nlohmann::json Program::to_json() const {
  auto write = [](const std::vector<Clause>& clauses) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& c : clauses) arr.push_back(clause_to_json(c));
    return arr;
  };
  return nlohmann::json{
      {"static", write(statics)}, {"initial", write(initials)}, {"transition", write(transitions)}};
}

Program Program::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open program file: " + path);
  nlohmann::json j;
  in >> j;
  return from_json(j);
}

World sample_world(const Program& program, int horizon, std::uint64_t seed) {
  if (horizon < 0) throw std::invalid_argument("horizon must be >= 0");
  World world;
  Rng rng(seed);
  SliceContext static_ctx{-1, -2, -2};
  for (const Clause& c : program.statics) apply_clause(world, c, static_ctx, rng);
  SliceContext initial_ctx{0, 0, -2};
  for (const Clause& c : program.initials) apply_clause(world, c, initial_ctx, rng);
  for (int t = 0; t < horizon; ++t) {
    SliceContext transition_ctx{t + 1, t, t + 1};
    for (const Clause& c : program.transitions) apply_clause(world, c, transition_ctx, rng);
  }
  return world;
}

bool event_holds(const World& world, const Event& event) {
  static const std::string context = "event";
  for (const EventCondition& cond : event) {
    const GroundKey key{cond.name, cond.args, cond.time.value_or(-1)};
    auto it = world.find(key);
    if (it == world.end()) return false;  // undefined variable: event is false
    if (!numeric_compare(cond.op, it->second, cond.value, context)) return false;
  }
  return true;
}

Event event_from_json(const nlohmann::json& j) {
  const nlohmann::json& conditions = j.is_array() ? j : j.at("conditions");
  Event event;
  for (const auto& c : conditions) {
    EventCondition cond;
    cond.name = c.at("name").get<std::string>();
    if (c.contains("args"))
      for (const auto& a : c.at("args")) cond.args.push_back(value_from_json(a));
    if (c.contains("time") && !c.at("time").is_null()) cond.time = c.at("time").get<int>();
    cond.op = c.value("op", "==");
    cond.value = value_from_json(c.at("value"));
    event.push_back(std::move(cond));
  }
  return event;
}

double query(const Program& program, int horizon, const Event& event, int n_samples,
             std::uint64_t seed, ExecutionMode mode) {
  if (n_samples <= 0) throw std::invalid_argument("n_samples must be > 0");
  long long hits = 0;
  if (mode == ExecutionMode::kParallel) {
#pragma omp parallel for reduction(+ : hits) schedule(static)
    for (int i = 0; i < n_samples; ++i) {
      const World world = sample_world(program, horizon, derive_seed(seed, i));
      if (event_holds(world, event)) ++hits;
    }
  } else {
    for (int i = 0; i < n_samples; ++i) {
      const World world = sample_world(program, horizon, derive_seed(seed, i));
      if (event_holds(world, event)) ++hits;
    }
  }
  return static_cast<double>(hits) / static_cast<double>(n_samples);
}

namespace {

constexpr const char* kPlacementJson = R"({
  "static": [
    {"head": "n", "args": [], "dist": {"tag": "poisson", "params": {"mean": 6}}, "body": []},
    {"head": "pos", "args": ["P"],
     "dist": {"tag": "uniform", "params": {"low": 0, "high": {"var": "N"}}},
     "body": [
       {"bind": "N", "rv": {"name": "n", "args": [], "time": null}},
       {"between": [1, {"var": "N"}, "P"]}
     ]},
    {"head": "left", "args": ["A", "B"],
     "dist": {"tag": "finite", "params": {"outcomes": [
       {"p": 0.99, "value": "t"}, {"p": 0.01, "value": "f"}]}},
     "body": [
       {"bind": "P1", "rv": {"name": "pos", "args": ["A"], "time": null}},
       {"bind": "P2", "rv": {"name": "pos", "args": ["B"], "time": null}},
       {"compare": {"op": "<", "lhs": {"var": "P1"}, "rhs": {"var": "P2"}}}
     ]}
  ],
  "initial": [],
  "transition": []
})";

constexpr const char* kDriftJson = R"({
  "static": [
    {"head": "n", "args": [], "dist": {"tag": "poisson", "params": {"mean": 6}}, "body": []}
  ],
  "initial": [
    {"head": "pos", "args": ["P"],
     "dist": {"tag": "uniform", "params": {"low": 0, "high": {"var": "N"}}},
     "body": [
       {"bind": "N", "rv": {"name": "n", "args": [], "time": null}},
       {"between": [1, {"var": "N"}, "P"]}
     ]}
  ],
  "transition": [
    {"head": "pos", "args": ["P"],
     "dist": {"tag": "gaussian", "params": {"mean": {"add": [{"var": "X"}, 3]}, "covariance": 1}},
     "body": [
       {"bind": "X", "rv": {"name": "pos", "args": ["P"], "time": "t"}}
     ]}
  ]
})";

}  // namespace

const char* builtin_program_json(const std::string& name) {
  if (name == "placement") return kPlacementJson;
  if (name == "drift") return kDriftJson;
  throw std::invalid_argument("unknown builtin program: " + name);
}

Program builtin_program(const std::string& name) {
  return Program::from_json(nlohmann::json::parse(builtin_program_json(name)));
}

}  // namespace anchorworld::dc
