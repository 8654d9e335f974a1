#include "qsdctl/hjb.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/LU>
#include <Eigen/SparseLU>

#include "qsdctl/qsd.hpp"

namespace qsdctl {

namespace {

constexpr Eigen::Index dense_limit = 4096;
constexpr double residual_factor = 1e-10;

// Solves A x = rhs for both right-hand sides (the cost and the all-ones
// certificate) with one factorization.
struct ShiftedSystem {
  Eigen::MatrixXd x;  // columns: solution, certificate
  double residual = 0.0;
  double scale = 0.0;  // |A|_inf |x|_inf + |rhs|_inf, per column maximum
};

template <typename Solver, typename Matrix>
ShiftedSystem solve_with(const Solver& solver, const Matrix& a, const Eigen::MatrixXd& rhs) {
  ShiftedSystem out;
  out.x = solver.solve(rhs);
  Eigen::MatrixXd r = rhs - a * out.x;
  out.x += solver.solve(r);
  r = rhs - a * out.x;
  out.residual = r.col(0).cwiseAbs().maxCoeff();
  return out;
}

ShiftedSystem solve_shifted(const TruncatedGenerator& generator, const Eigen::VectorXd& f, double beta) {
  const int n = generator.levels;
  SparseMatrix a = generator.restricted();
  for (int i = 0; i < n; ++i) a.coeffRef(i, i) += beta;

  Eigen::MatrixXd rhs(n, 2);
  rhs.col(0) = -f.tail(n);
  rhs.col(1) = -Eigen::VectorXd::Ones(n);

  ShiftedSystem out;
  double norm_a = 0.0;
  for (int i = 0; i < n; ++i) norm_a = std::max(norm_a, a.row(i).cwiseAbs().sum());
  if (n <= dense_limit) {
    const Eigen::MatrixXd dense(a);
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(dense);
    if (!(lu.rcond() > 1e3 * std::numeric_limits<double>::epsilon())) {
      throw EvaluationError(EvaluationError::Kind::singular,
                            "beta I + L is singular to working precision (beta = " + std::to_string(beta) + ")");
    }
    out = solve_with(lu, dense, rhs);
  } else {
    Eigen::SparseMatrix<double> column_major(a);
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    lu.compute(column_major);
    if (lu.info() != Eigen::Success) {
      throw EvaluationError(EvaluationError::Kind::singular, "sparse factorization of beta I + L failed");
    }
    out = solve_with(lu, column_major, rhs);
  }
  out.scale = norm_a * out.x.col(0).cwiseAbs().maxCoeff() + f.cwiseAbs().maxCoeff();
  return out;
}

}  // namespace

std::string_view to_string(OptimizationMode mode) { return mode == OptimizationMode::min ? "min" : "max"; }

OptimizationMode parse_mode(std::string_view text) {
  if (text == "min") return OptimizationMode::min;
  if (text == "max") return OptimizationMode::max;
  throw std::invalid_argument("mode must be 'min' or 'max', got '" + std::string(text) + "'");
}

std::string_view to_string(Termination termination) {
  switch (termination) {
    case Termination::policy_stable: return "policy-stable";
    case Termination::max_iter: return "max-iter";
    case Termination::evaluation_diverged: return "evaluation-diverged";
  }
  return "?";
}

bool is_evaluable(const TruncatedGenerator& generator, double beta) {
  try {
    const auto system = solve_shifted(generator, Eigen::VectorXd::Zero(generator.levels + 1), beta);
    return system.x.col(1).minCoeff() > 0.0;
  } catch (const EvaluationError&) {
    return false;
  }
}

Eigen::VectorXd evaluate_policy(const TruncatedGenerator& generator, const Eigen::VectorXd& f, double beta) {
  const int n = generator.levels;
  if (f.size() != n + 1) throw std::invalid_argument("cost vector must cover states 0..N");
  if (f(0) != 0.0 || (f.array() < 0.0).any()) throw std::invalid_argument("cost must be non-negative with f(0) = 0");

  const auto system = solve_shifted(generator, f, beta);
  if (!(system.x.col(1).minCoeff() > 0.0)) {
    throw EvaluationError(EvaluationError::Kind::infeasible_beta,
                          "beta = " + std::to_string(beta) +
                              " is not below the extinction rate of this policy; the discounted cost is infinite");
  }
  if (!(system.residual <= residual_factor * system.scale)) {
    throw EvaluationError(EvaluationError::Kind::singular,
                          "policy evaluation residual " + std::to_string(system.residual) + " exceeds tolerance");
  }
  Eigen::VectorXd v(n + 1);
  v(0) = 0.0;
  v.tail(n) = system.x.col(0);
  return v;
}

MarkovControl improve_policy(const ActionGenerators& generators, const Eigen::VectorXd& v, OptimizationMode mode,
                             double tie_tolerance) {
  const int n = generators.levels;
  if (v.size() != n + 1 || v(0) != 0.0) throw std::invalid_argument("value vector must cover 0..N with v(0) = 0");
  const double sign = mode == OptimizationMode::min ? 1.0 : -1.0;
  std::vector<std::size_t> actions(static_cast<std::size_t>(n), 0);
  std::vector<double> h(generators.action_count());
  for (int x = 1; x <= n; ++x) {
    for (std::size_t a = 0; a < h.size(); ++a) {
      h[a] = sign * generators.hamiltonian(x, a, v);
      if (!std::isfinite(h[a])) throw std::runtime_error("non-finite Hamiltonian at state " + std::to_string(x));
    }
    const double best = *std::min_element(h.begin(), h.end());
    for (std::size_t a = 0; a < h.size(); ++a) {
      if (h[a] <= best + tie_tolerance) {
        actions[static_cast<std::size_t>(x - 1)] = a;
        break;
      }
    }
  }
  return MarkovControl(std::move(actions));
}

MarkovControl improve_policy(const ModelSpec& model, const Eigen::VectorXd& v, double /*beta*/,
                             OptimizationMode mode) {
  return improve_policy(ActionGenerators::build(model, static_cast<int>(v.size()) - 1), v, mode);
}

Eigen::VectorXd hjb_residual(const ActionGenerators& generators, const Eigen::VectorXd& v, double beta,
                             OptimizationMode mode) {
  const int n = generators.levels;
  if (v.size() != n + 1 || v(0) != 0.0) throw std::invalid_argument("value vector must cover 0..N with v(0) = 0");
  Eigen::VectorXd out(n);
  for (int x = 1; x <= n; ++x) {
    double best = generators.hamiltonian(x, 0, v);
    for (std::size_t a = 1; a < generators.action_count(); ++a) {
      const double h = generators.hamiltonian(x, a, v);
      best = mode == OptimizationMode::min ? std::min(best, h) : std::max(best, h);
    }
    out(x - 1) = beta * v(x) + best;
  }
  return out;
}

Eigen::VectorXd hjb_residual(const ModelSpec& model, const Eigen::VectorXd& v, double beta, OptimizationMode mode) {
  return hjb_residual(ActionGenerators::build(model, static_cast<int>(v.size()) - 1), v, beta, mode);
}

ValueSolution policy_iteration(const ModelSpec& model, double beta, OptimizationMode mode,
                               const PolicyIterationOptions& options) {
  const int levels = options.levels > 0 ? options.levels : model.truncation;
  return policy_iteration(model, ActionGenerators::build(model, levels), beta, mode, options);
}

ValueSolution policy_iteration(const ModelSpec& model, const ActionGenerators& generators, double beta,
                               OptimizationMode mode, const PolicyIterationOptions& options) {
  const int n = generators.levels;
  const std::size_t m = generators.action_count();
  ValueSolution out;
  out.mode = mode;
  out.beta = beta;
  out.cost_norm = generators.cost.cwiseAbs().maxCoeff();

  auto evaluate = [&](const MarkovControl& control) {
    return evaluate_policy(generators.compose(control), generators.cost_of(control), beta);
  };

  // Starting policy: the requested one, else the first evaluable constant policy.
  std::vector<MarkovControl> starts;
  if (options.initial) starts.push_back(options.initial->resized(n));
  for (std::size_t a = 0; a < m; ++a) starts.push_back(MarkovControl::constant(a, n));
  Eigen::VectorXd v;
  for (const auto& candidate : starts) {
    try {
      v = evaluate(candidate);
      out.policy = candidate;
      break;
    } catch (const EvaluationError&) {
    }
  }
  if (v.size() == 0) {
    out.termination = Termination::evaluation_diverged;
    out.policy = starts.front();
    out.diagnostic = mode == OptimizationMode::min
                         ? "beta exceeds truncated lambda-star: no constant policy has extinction rate above beta"
                         : "beta exceeds the extinction rate of every constant policy; the survival value is infinite";
    return out;
  }

  const double direction = mode == OptimizationMode::min ? 1.0 : -1.0;
  for (int iter = 1;; ++iter) {
    // Keep the current action unless another is better by more than the
    // rounding scale; this guarantees termination on exact ties.
    double scale = 1.0 + out.cost_norm;
    for (std::size_t a = 0; a < m; ++a) scale += generators.per_action[a].total_rate.maxCoeff() * v.cwiseAbs().maxCoeff();
    const double tie = 1e-12 * scale;
    const MarkovControl candidate = improve_policy(generators, v, mode, tie);
    std::vector<std::size_t> next(out.policy.actions().begin(), out.policy.actions().end());
    int changes = 0;
    for (int x = 1; x <= n; ++x) {
      const std::size_t current = out.policy(x);
      const std::size_t proposed = candidate(x);
      if (proposed == current) continue;
      const double gain = direction * (generators.hamiltonian(x, current, v) - generators.hamiltonian(x, proposed, v));
      if (gain > tie) {
        next[static_cast<std::size_t>(x - 1)] = proposed;
        ++changes;
      }
    }
    if (changes == 0) {
      out.termination = Termination::policy_stable;
      break;
    }
    if (iter > options.max_iter) {
      out.termination = Termination::max_iter;
      out.diagnostic = "policy iteration did not stabilize in " + std::to_string(options.max_iter) + " iterations";
      break;
    }
    MarkovControl improved(std::move(next));
    Eigen::VectorXd w;
    try {
      w = evaluate(improved);
    } catch (const EvaluationError& e) {
      out.termination = Termination::evaluation_diverged;
      out.diagnostic = std::string("evaluation refused for an improved policy: ") + e.what() +
                       (mode == OptimizationMode::min ? " (beta may exceed truncated lambda-star)"
                                                      : " (beta exceeds truncated lambda-lower-star)");
      out.policy = improved;
      break;
    }
    IterationRecord record;
    record.policy_changes = changes;
    record.value_delta = (w - v).cwiseAbs().maxCoeff();
    record.wrong_direction = std::max(0.0, (direction * (w - v)).maxCoeff());
    out.trace.push_back(record);
    v = std::move(w);
    out.policy = std::move(improved);
  }

  out.value = v;
  out.hjb_residual = hjb_residual(generators, v, beta, mode).cwiseAbs().maxCoeff();
  if (mode == OptimizationMode::max && options.check_transversality && out.converged()) {
    out.transversality = verify_transversality(model, out);
  }
  return out;
}

Transversality verify_transversality(const ModelSpec& model, const ValueSolution& solution) {
  if (solution.mode != OptimizationMode::max) {
    throw std::invalid_argument("transversality applies to the maximization problem");
  }
  const int n = solution.policy.levels();
  const auto qsd = solve_qsd(build_generator(model, solution.policy, n));
  return {qsd.lambda > solution.beta, qsd.lambda - solution.beta, qsd.lambda};
}

}  // namespace qsdctl
