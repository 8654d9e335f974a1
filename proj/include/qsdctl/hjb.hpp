#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qsdctl/generator.hpp"

namespace qsdctl {

enum class OptimizationMode { min, max };

std::string_view to_string(OptimizationMode mode);
OptimizationMode parse_mode(std::string_view text);

/// Policy evaluation refused: either beta is not below the extinction rate of
/// the policy (the discounted cost is infinite) or the system is singular to
/// working precision.
class EvaluationError : public std::runtime_error {
 public:
  enum class Kind { infeasible_beta, singular };
  EvaluationError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

/// True iff beta < lambda of the generator. Decided by the M-matrix test:
/// -(beta I + Q|_{1..N}) u = 1 must have a strictly positive solution.
bool is_evaluable(const TruncatedGenerator& generator, double beta);

/// J_beta for a fixed Markov control: solves (beta I + L) v = -f on {1..N}
/// with v(0) = 0. `f` lives on {0..N}. Dense partial-pivot LU up to 4096
/// states, sparse LU above, each followed by one step of residual correction.
Eigen::VectorXd evaluate_policy(const TruncatedGenerator& generator, const Eigen::VectorXd& f, double beta);

/// Pointwise arg-opt of f(x, a) + sum_y q_a(x -> y)(v(y) - v(x)). Actions
/// within `tie_tolerance` of the optimum count as ties; the lowest index wins.
MarkovControl improve_policy(const ActionGenerators& generators, const Eigen::VectorXd& v, OptimizationMode mode,
                             double tie_tolerance = 0.0);
MarkovControl improve_policy(const ModelSpec& model, const Eigen::VectorXd& v, double beta, OptimizationMode mode);

/// beta v(x) + opt_a { L^a v(x) + f(x, a) } for x = 1..N (entry 0 is state 1).
Eigen::VectorXd hjb_residual(const ActionGenerators& generators, const Eigen::VectorXd& v, double beta,
                             OptimizationMode mode);
Eigen::VectorXd hjb_residual(const ModelSpec& model, const Eigen::VectorXd& v, double beta, OptimizationMode mode);

struct IterationRecord {
  int policy_changes = 0;
  double value_delta = 0.0;    // |v_k - v_{k-1}|_inf
  double wrong_direction = 0.0; // largest move against the optimization direction
};

enum class Termination { policy_stable, max_iter, evaluation_diverged };

std::string_view to_string(Termination termination);

struct Transversality {
  bool holds = false;
  double margin = 0.0;  // lambda of the policy minus beta
  double lambda = 0.0;
};

struct ValueSolution {
  Eigen::VectorXd value;  // on {0..N}, value(0) = 0
  MarkovControl policy;
  OptimizationMode mode = OptimizationMode::min;
  double beta = 0.0;
  double hjb_residual = 0.0;
  double cost_norm = 0.0;  // |f|_inf
  std::vector<IterationRecord> trace;
  Termination termination = Termination::policy_stable;
  std::string diagnostic;
  std::optional<Transversality> transversality;

  bool converged() const noexcept { return termination == Termination::policy_stable; }
};

struct PolicyIterationOptions {
  double tol = 1e-9;
  int max_iter = 500;
  int levels = 0;                        // 0: the model's truncation level
  std::optional<MarkovControl> initial;  // default: action 0 everywhere
  bool check_transversality = true;      // max mode only
};

/// Howard policy iteration for the discounted min (extinction) or max
/// (survival) problem on the truncated chain.
ValueSolution policy_iteration(const ModelSpec& model, double beta, OptimizationMode mode,
                               const PolicyIterationOptions& options = {});
ValueSolution policy_iteration(const ModelSpec& model, const ActionGenerators& generators, double beta,
                               OptimizationMode mode, const PolicyIterationOptions& options = {});

/// lambda of the returned max-mode policy against beta; when lambda > beta,
/// e^{beta T} E_x[w(X_T)] <= |w|_inf e^{beta T} P_x(T < tau) vanishes.
Transversality verify_transversality(const ModelSpec& model, const ValueSolution& solution);

}  // namespace qsdctl
