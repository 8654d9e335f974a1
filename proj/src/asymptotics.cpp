#include "qsdctl/asymptotics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "qsdctl/parallel.hpp"

namespace qsdctl {

namespace {

int resolve_levels(const ModelSpec& model, int levels) {
  const int n = levels > 0 ? levels : model.truncation;
  if (n < 1) throw std::invalid_argument("truncation level must be >= 1");
  return n;
}

std::uint64_t checked_count(const ModelSpec& model, int levels, std::uint64_t cap) {
  const auto count = control_count(model.action_count(), levels, cap);
  if (!count) {
    throw ModelError("enumeration of " + std::to_string(model.action_count()) + "^" + std::to_string(levels) +
                     " controls exceeds the cap of " + std::to_string(cap));
  }
  return *count;
}

std::vector<ControlRecord> qsd_table(const ActionGenerators& generators, std::uint64_t count) {
  const std::size_t m = generators.action_count();
  std::vector<ControlRecord> table(count);
  parallel_for(count, [&](std::size_t i, std::size_t) {
    ControlRecord& row = table[i];
    row.id = i;
    row.control = control_from_index(i, m, generators.levels);
    const auto qsd = solve_qsd(generators.compose(row.control));
    row.lambda = qsd.lambda;
    row.pi_f = qsd.mean_of(generators.cost_of(row.control));
    row.eta = qsd.eta;
  });
  return table;
}

bool better(OptimizationMode mode, double a, double b) { return mode == OptimizationMode::min ? a < b : a > b; }

}  // namespace

std::vector<ControlRecord> enumerate_extinction_rates(const ModelSpec& model, int levels, std::uint64_t cap) {
  const int n = resolve_levels(model, levels);
  const auto count = checked_count(model, n, cap);
  return qsd_table(ActionGenerators::build(model, n), count);
}

EnumerationResult brute_force_control_opt(const ModelSpec& model, double beta, OptimizationMode mode, int levels,
                                          std::uint64_t cap) {
  const int n = resolve_levels(model, levels);
  const auto count = checked_count(model, n, cap);
  const auto generators = ActionGenerators::build(model, n);

  EnumerationResult out;
  out.mode = mode;
  out.beta = beta;
  out.levels = n;
  out.table = qsd_table(generators, count);
  parallel_for(count, [&](std::size_t i, std::size_t) {
    ControlRecord& row = out.table[i];
    row.feasible = row.lambda > beta;
    try {
      row.value = evaluate_policy(generators.compose(row.control), generators.cost_of(row.control), beta);
    } catch (const EvaluationError&) {
      row.refused = true;
    }
  });

  const auto first_usable = std::find_if(out.table.begin(), out.table.end(), [](const auto& r) { return !r.refused; });
  if (first_usable == out.table.end()) {
    throw EvaluationError(EvaluationError::Kind::infeasible_beta,
                          "beta = " + std::to_string(beta) + " is not below the extinction rate of any control");
  }
  if (mode == OptimizationMode::max) {
    const auto unbounded = std::find_if(out.table.begin(), out.table.end(), [](const auto& r) { return r.refused; });
    if (unbounded != out.table.end()) {
      out.bounded = false;
      out.value = Eigen::VectorXd::Constant(n + 1, std::numeric_limits<double>::infinity());
      out.value(0) = 0.0;
      out.optimizer = unbounded->control;
      out.optimizer_id = unbounded->id;
      return out;
    }
  }

  out.value = first_usable->value;
  for (const auto& row : out.table) {
    if (row.refused) continue;
    if (mode == OptimizationMode::min) {
      out.value = out.value.cwiseMin(row.value);
    } else {
      out.value = out.value.cwiseMax(row.value);
    }
  }

  // Lowest id reaching the extremum everywhere; otherwise the best total.
  const std::uint64_t none = std::numeric_limits<std::uint64_t>::max();
  std::uint64_t attaining = none;
  std::uint64_t best_total = first_usable->id;
  for (const auto& row : out.table) {
    if (row.refused) continue;
    const double tol = 1e-10 * (1.0 + out.value.cwiseAbs().maxCoeff());
    if (attaining == none && (row.value - out.value).cwiseAbs().maxCoeff() <= tol) attaining = row.id;
    if (better(mode, row.value.sum(), out.table[best_total].value.sum())) best_total = row.id;
  }
  out.attains_pointwise = attaining != none;
  out.optimizer_id = out.attains_pointwise ? attaining : best_total;
  out.optimizer = out.table[out.optimizer_id].control;
  return out;
}

std::string_view to_string(RateMode mode) { return mode == RateMode::sup ? "sup" : "inf"; }

RateMode parse_rate_mode(std::string_view text) {
  if (text == "sup") return RateMode::sup;
  if (text == "inf") return RateMode::inf;
  throw std::invalid_argument("rate mode must be 'sup' or 'inf', got '" + std::string(text) + "'");
}

namespace {

struct ContinuationResult {
  double lambda = 0.0;
  MarkovControl optimizer;
  std::vector<ContinuationStep> path;
  bool stalled = false;
  int refusals = 0;
  std::string diagnostic;
};

// Min problem with f = 1 at beta = lambda_best - delta. The returned policy
// is evaluable, so its rate exceeds beta; the best rate found never drops.
ContinuationResult continue_sup(const ModelSpec& unit, const ActionGenerators& generators, const RateOptions& options) {
  ContinuationResult out;
  out.optimizer = MarkovControl::constant(0, generators.levels);
  out.lambda = solve_qsd(generators.compose(out.optimizer)).lambda;

  PolicyIterationOptions pio;
  pio.levels = generators.levels;
  pio.check_transversality = false;
  double delta = 0.1;
  for (int step = 0; step < options.max_steps; ++step) {
    const double beta = out.lambda - delta;
    pio.initial = out.optimizer;
    const auto solution = policy_iteration(unit, generators, beta, OptimizationMode::min, pio);
    if (!solution.converged()) {
      out.stalled = true;
      out.diagnostic = "policy iteration failed at beta = " + std::to_string(beta) + ": " + solution.diagnostic;
      return out;
    }
    const double lambda = solve_qsd(generators.compose(solution.policy)).lambda;
    out.path.push_back({beta, lambda});
    const bool improved = lambda > out.lambda + options.tol;
    if (lambda > out.lambda) {
      out.lambda = lambda;
      out.optimizer = solution.policy;
    }
    if (delta < options.tol && !improved) return out;
    delta *= 0.5;
  }
  out.stalled = true;
  out.diagnostic = "continuation did not settle in " + std::to_string(options.max_steps) + " steps";
  return out;
}

// Max problem with f = 1. A stable solution at beta certifies beta < lambda_*;
// a refusal exposes a control with rate <= beta. The bracket
// (beta_lo, lambda_hi] shrinks until it is narrower than tol.
ContinuationResult continue_inf(const ModelSpec& unit, const ActionGenerators& generators, const RateOptions& options) {
  ContinuationResult out;
  out.optimizer = MarkovControl::constant(0, generators.levels);
  out.lambda = solve_qsd(generators.compose(out.optimizer)).lambda;

  PolicyIterationOptions pio;
  pio.levels = generators.levels;
  pio.check_transversality = false;
  double beta_lo = -std::numeric_limits<double>::infinity();
  double beta = std::min(out.lambda - 0.1, 0.0);
  double delta = 0.1;
  for (int step = 0; step < options.max_steps; ++step) {
    pio.initial = out.optimizer;
    const auto solution = policy_iteration(unit, generators, beta, OptimizationMode::max, pio);
    if (solution.termination == Termination::max_iter) {
      out.stalled = true;
      out.diagnostic = "policy iteration failed at beta = " + std::to_string(beta) + ": " + solution.diagnostic;
      return out;
    }
    const double lambda = solve_qsd(generators.compose(solution.policy)).lambda;
    if (solution.converged()) {
      beta_lo = beta;
      out.path.push_back({beta, lambda});
    } else {
      ++out.refusals;
    }
    if (lambda < out.lambda) {
      out.lambda = lambda;
      out.optimizer = solution.policy;
    }
    if (out.lambda - beta_lo < options.tol) return out;
    beta = out.lambda - delta;
    if (beta <= beta_lo) beta = 0.5 * (beta_lo + out.lambda);
    delta *= 0.5;
  }
  out.stalled = true;
  out.diagnostic = "continuation did not settle in " + std::to_string(options.max_steps) + " steps";
  return out;
}

}  // namespace

RateOptimum optimize_extinction_rate(const ModelSpec& model, RateMode mode, const RateOptions& options) {
  const int n = resolve_levels(model, options.levels);
  const ModelSpec unit = model.with_unit_cost();
  const auto generators = ActionGenerators::build(unit, n);

  RateOptimum out;
  out.mode = mode;
  const auto continuation = mode == RateMode::sup ? continue_sup(unit, generators, options)
                                                  : continue_inf(unit, generators, options);
  out.path = continuation.path;
  out.stalled = continuation.stalled;
  out.refusals = continuation.refusals;
  out.diagnostic = continuation.diagnostic;
  out.continuation_lambda = continuation.lambda;
  out.lambda_star = continuation.lambda;
  out.optimizer = continuation.optimizer;
  out.method = "continuation";

  if (options.enumerate) {
    if (const auto count = control_count(model.action_count(), n, options.cap)) {
      const auto table = qsd_table(generators, *count);
      auto best = table.begin();
      for (auto it = table.begin(); it != table.end(); ++it) {
        if (mode == RateMode::sup ? it->lambda > best->lambda : it->lambda < best->lambda) best = it;
      }
      out.enumeration_lambda = best->lambda;
      if (out.stalled) {
        out.method = "enumeration";
        out.lambda_star = best->lambda;
        out.optimizer = best->control;
      } else {
        out.agreement = std::abs(continuation.lambda - best->lambda) <= options.tol;
        if (!*out.agreement) {
          out.diagnostic = "continuation and enumeration disagree by " +
                           std::to_string(std::abs(continuation.lambda - best->lambda));
        }
      }
    }
  }
  return out;
}

LimitReport limit_theorem_check(const ModelSpec& model, int x, OptimizationMode mode, const LimitOptions& options) {
  const int n = resolve_levels(model, options.levels);
  if (x < 1 || x > n) throw std::invalid_argument("state must lie in 1..N");
  if (options.k_max < 0) throw std::invalid_argument("k_max must be non-negative");

  LimitReport out;
  out.mode = mode;
  out.state = x;

  const auto generators = ActionGenerators::build(model, n);
  std::optional<MarkovControl> optimizer;
  if (options.lambda_ext) {
    out.lambda_ext = *options.lambda_ext;
  } else {
    RateOptions rate;
    rate.levels = n;
    rate.cap = options.cap;
    const auto optimum =
        optimize_extinction_rate(model, mode == OptimizationMode::min ? RateMode::sup : RateMode::inf, rate);
    out.lambda_ext = optimum.lambda_star;
    optimizer = optimum.optimizer;
  }
  out.beta0 = options.beta0.value_or(out.lambda_ext - 1.0);
  if (!(out.beta0 < out.lambda_ext)) throw std::invalid_argument("beta0 must lie below the extremal rate");

  // Reference: extremal pi(f) eta(x) over controls whose rate is lambda_ext.
  if (const auto count = control_count(model.action_count(), n, options.cap)) {
    const auto table = qsd_table(generators, *count);
    std::vector<const ControlRecord*> optimal;
    for (const auto& row : table) {
      if (std::abs(row.lambda - out.lambda_ext) <= options.rate_tol) optimal.push_back(&row);
    }
    if (optimal.empty()) throw std::runtime_error("no enumerated control has rate lambda_ext within rate_tol");
    Eigen::VectorXd extremum = optimal.front()->pi_f * optimal.front()->eta;
    for (const auto* row : optimal) {
      const Eigen::VectorXd r = row->pi_f * row->eta;
      if (mode == OptimizationMode::min) {
        extremum = extremum.cwiseMin(r);
      } else {
        extremum = extremum.cwiseMax(r);
      }
    }
    out.reference = extremum(x - 1);
    out.reference_source = "enumeration";
    if (!optimizer) optimizer = optimal.front()->control;
    out.reference_attained = std::any_of(optimal.begin(), optimal.end(), [&](const ControlRecord* row) {
      const Eigen::VectorXd r = row->pi_f * row->eta;
      return (r - extremum).cwiseAbs().maxCoeff() <= 1e-9 * (1.0 + extremum.cwiseAbs().maxCoeff());
    });
  } else {
    if (!optimizer) {
      RateOptions rate;
      rate.levels = n;
      rate.enumerate = false;
      optimizer = optimize_extinction_rate(model, mode == OptimizationMode::min ? RateMode::sup : RateMode::inf, rate)
                      .optimizer;
    }
    const auto qsd = solve_qsd(generators.compose(*optimizer));
    out.reference = qsd.mean_of(generators.cost_of(*optimizer)) * qsd.eta(x - 1);
    out.reference_source = "optimizer";
  }
  out.inconclusive = std::abs(out.reference) <= options.rate_tol * generators.cost.cwiseAbs().maxCoeff();

  out.rows.resize(static_cast<std::size_t>(options.k_max) + 1);
  PolicyIterationOptions pio;
  pio.levels = n;
  pio.initial = optimizer;
  parallel_for(out.rows.size(), [&](std::size_t k, std::size_t) {
    LimitRow& row = out.rows[k];
    row.k = static_cast<int>(k);
    row.gap = std::ldexp(out.lambda_ext - out.beta0, -row.k);
    row.beta = out.lambda_ext - row.gap;
    const auto solution = policy_iteration(model, generators, row.beta, mode, pio);
    if (!solution.converged() || !std::isfinite(solution.value(x))) {
      row.diagnostic = solution.diagnostic;
      return;
    }
    row.usable = true;
    row.value = solution.value(x);
    row.product = row.gap * row.value;
    row.deviation = std::abs(row.product - out.reference);
  });

  std::vector<const LimitRow*> usable;
  for (const auto& row : out.rows) {
    if (!row.usable) break;
    usable.push_back(&row);
    out.largest_usable_k = row.k;
  }
  out.deviation_decreasing = usable.size() >= 2;
  for (std::size_t i = 1; i < usable.size(); ++i) {
    if (!(usable[i]->deviation < usable[i - 1]->deviation)) out.deviation_decreasing = false;
  }

  const std::size_t tail = std::min<std::size_t>(usable.size(), static_cast<std::size_t>(std::max(options.tail, 1)));
  if (tail == 0) return out;
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = usable.size() - tail; i < usable.size(); ++i) {
    num += usable[i]->deviation * usable[i]->gap;
    den += usable[i]->gap * usable[i]->gap;
  }
  out.c_fit = num / den;
  out.bounded = true;
  for (std::size_t i = usable.size() - tail; i < usable.size(); ++i) {
    const double fitted = out.c_fit * usable[i]->gap;
    const double spread = fitted > 0.0 ? std::abs(usable[i]->deviation / fitted - 1.0)
                                       : (usable[i]->deviation > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
    out.ratio_spread = std::max(out.ratio_spread, spread);
    if (usable[i]->deviation > (1.0 + options.stability) * fitted) out.bounded = false;
  }
  out.stable = out.ratio_spread <= options.stability;
  return out;
}

CorollaryReport corollary_spot_check(const ModelSpec& model, int x, OptimizationMode mode,
                                     const std::vector<HistoryPolicy>& policies, double beta, const SimConfig& config,
                                     int levels) {
  const int n = resolve_levels(model, levels);
  const ModelSpec unit = model.with_unit_cost();

  CorollaryReport out;
  out.mode = mode;
  out.beta = beta;
  out.state = x;
  out.levels = n;

  PolicyIterationOptions pio;
  pio.levels = n;
  const auto solution = policy_iteration(unit, beta, mode, pio);
  if (!solution.converged()) {
    throw EvaluationError(EvaluationError::Kind::infeasible_beta, solution.diagnostic);
  }
  out.solver_value = solution.value(std::min(x, n));

  SimConfig run = config;
  run.lump_at = n;
  const Envelope envelope = Envelope::from_model(model);
  out.all_within = true;
  for (const auto& policy : policies) {
    CorollaryRow row;
    row.policy = policy.name;
    row.estimate = estimate_cost(unit, policy, envelope, x, beta, run);
    row.within = mode == OptimizationMode::max
                     ? row.estimate.mean <= out.solver_value + 3.0 * row.estimate.std_error
                     : row.estimate.mean >= out.solver_value - 3.0 * row.estimate.std_error;
    out.all_within = out.all_within && row.within;
    out.rows.push_back(std::move(row));
  }
  return out;
}

std::vector<HistoryPolicy> shipped_history_policies(std::size_t action_count, const MarkovControl& markov,
                                                    std::uint64_t seed) {
  if (action_count == 0) throw std::invalid_argument("no actions");
  const std::size_t last = action_count - 1;
  std::vector<HistoryPolicy> out;
  out.push_back({"switch-after-first-jump",
                 [last](double, const Trajectory& past) { return past.jumps.empty() ? std::size_t{0} : last; }});
  RandomStream rng(seed, 0);
  for (int i = 0; i < 5; ++i) {
    const double threshold = 0.05 + 1.95 * rng.uniform();
    const bool late_last = i % 2 == 0;
    char name[64];
    std::snprintf(name, sizeof name, "time-threshold-%.4f", threshold);
    out.push_back({name, [=](double t, const Trajectory&) {
                     return (t < threshold) == late_last ? std::size_t{0} : last;
                   }});
  }
  out.push_back({"jump-parity", [action_count](double, const Trajectory& past) {
                   return past.jumps.size() % action_count;
                 }});
  out.push_back({"running-max", [last](double, const Trajectory& past) {
                   int high = past.initial_state;
                   for (const auto& jump : past.jumps) high = std::max(high, jump.state);
                   return high > past.initial_state ? last : std::size_t{0};
                 }});
  out.push_back(HistoryPolicy::from_markov("markov-as-history", markov));
  return out;
}

}  // namespace qsdctl
