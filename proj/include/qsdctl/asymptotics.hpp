#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qsdctl/hjb.hpp"
#include "qsdctl/qsd.hpp"
#include "qsdctl/simulate.hpp"

namespace qsdctl {

/// One row of the exhaustive control table.
struct ControlRecord {
  std::uint64_t id = 0;
  MarkovControl control;
  double lambda = 0.0;
  double pi_f = 0.0;        // pi(f^alpha)
  Eigen::VectorXd eta;      // index state - 1
  bool feasible = false;    // lambda > beta
  bool refused = false;     // evaluate_policy declined this control
  Eigen::VectorXd value;    // J_beta on {0..N}; empty when refused
};

struct EnumerationResult {
  OptimizationMode mode = OptimizationMode::min;
  double beta = 0.0;
  int levels = 0;
  Eigen::VectorXd value;    // pointwise extremum over controls on {0..N}; +inf if unbounded
  MarkovControl optimizer;
  std::uint64_t optimizer_id = 0;
  bool attains_pointwise = false;  // the optimizer reaches the extremum at every state
  bool bounded = true;             // false in max mode when some control has lambda <= beta
  std::vector<ControlRecord> table;
};

/// QSD and J_beta for every Markov control on {1..levels}. In min mode it
/// throws EvaluationError when no control is feasible at beta.
EnumerationResult brute_force_control_opt(const ModelSpec& model, double beta, OptimizationMode mode, int levels,
                                          std::uint64_t cap = default_enumeration_cap);

/// QSD of every control without any cost evaluation.
std::vector<ControlRecord> enumerate_extinction_rates(const ModelSpec& model, int levels,
                                                      std::uint64_t cap = default_enumeration_cap);

enum class RateMode { sup, inf };

std::string_view to_string(RateMode mode);
RateMode parse_rate_mode(std::string_view text);

struct ContinuationStep {
  double beta = 0.0;
  double lambda = 0.0;
};

struct RateOptimum {
  RateMode mode = RateMode::sup;
  double lambda_star = 0.0;
  MarkovControl optimizer;
  std::string method;  // "continuation" or "enumeration"
  std::vector<ContinuationStep> path;
  std::optional<double> continuation_lambda;
  std::optional<double> enumeration_lambda;
  std::optional<bool> agreement;   // |continuation - enumeration| <= tol, when both ran
  bool stalled = false;
  int refusals = 0;                // inf mode: evaluations refused above lambda_*
  std::string diagnostic;
};

struct RateOptions {
  double tol = 1e-8;
  int levels = 0;          // 0: the model's truncation level
  int max_steps = 200;
  std::uint64_t cap = default_enumeration_cap;
  bool enumerate = true;   // run the exhaustive table when m^N <= cap
};

/// sup (lambda*) or inf (lambda_*) of the extinction rate over Markov
/// controls. Continuation in beta on the unit-cost problem: the min problem
/// locates lambda*, the max problem locates lambda_*.
RateOptimum optimize_extinction_rate(const ModelSpec& model, RateMode mode, const RateOptions& options = {});

struct LimitRow {
  int k = 0;
  double beta = 0.0;
  double gap = 0.0;         // lambda_ext - beta
  double value = 0.0;       // v_beta(x) or w_beta(x)
  double product = 0.0;     // gap * value
  double deviation = 0.0;   // |product - reference|
  bool usable = false;
  std::string diagnostic;
};

struct LimitOptions {
  int k_max = 10;
  std::optional<double> beta0;         // default lambda_ext - 1
  std::optional<double> lambda_ext;    // default: optimize_extinction_rate
  double rate_tol = 1e-8;
  int levels = 0;
  std::uint64_t cap = default_enumeration_cap;
  int tail = 5;                        // grid points used for the constant fit
  double stability = 0.3;
};

struct LimitReport {
  OptimizationMode mode = OptimizationMode::min;
  int state = 0;
  double lambda_ext = 0.0;
  double beta0 = 0.0;
  double reference = 0.0;          // extremal pi(f) eta(x) over rate-optimal controls
  std::string reference_source;    // "enumeration" or "optimizer"
  std::optional<bool> reference_attained;  // single control attains the extremum at every state
  std::vector<LimitRow> rows;
  int largest_usable_k = -1;
  double c_fit = 0.0;              // least-squares slope of deviation against gap over the tail
  double ratio_spread = 0.0;       // max |deviation / (c_fit gap) - 1| over the tail
  bool stable = false;             // ratio_spread <= stability
  bool bounded = false;            // tail deviations <= (1 + stability) c_fit gap
  bool deviation_decreasing = false;
  bool inconclusive = false;       // reference below rate_tol |f|
};

/// Products (lambda_ext - beta_k) v(x) on the grid
/// beta_k = lambda_ext - 2^-k (lambda_ext - beta0) against the extremal
/// pi(f) eta(x). Min mode approaches lambda* from below, max mode lambda_*.
LimitReport limit_theorem_check(const ModelSpec& model, int x, OptimizationMode mode, const LimitOptions& options = {});

struct CorollaryRow {
  std::string policy;
  MonteCarloEstimate estimate;
  bool within = false;
};

struct CorollaryReport {
  OptimizationMode mode = OptimizationMode::max;
  double beta = 0.0;
  int state = 0;
  int levels = 0;
  double solver_value = 0.0;  // w_beta(x) or v_beta(x) of the unit-cost problem
  std::vector<CorollaryRow> rows;
  bool all_within = false;
};

/// Discounted survival integrals of history-dependent policies by Monte
/// Carlo on the truncated chain. Max mode: each estimate must lie below
/// w_beta(x) + 3 stderr. Min mode: above v_beta(x) - 3 stderr.
CorollaryReport corollary_spot_check(const ModelSpec& model, int x, OptimizationMode mode,
                                     const std::vector<HistoryPolicy>& policies, double beta,
                                     const SimConfig& config, int levels = 0);

/// The history-dependent test policies shipped with the tool: switch after
/// the first jump, five time thresholds drawn from `seed`, jump-count
/// parity, running maximum, and `markov` disguised as a history rule.
std::vector<HistoryPolicy> shipped_history_policies(std::size_t action_count, const MarkovControl& markov,
                                                    std::uint64_t seed = 7);

}  // namespace qsdctl
