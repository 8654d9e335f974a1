// Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any fails.
// Pass criterion numbers as arguments to run a subset.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "fixtures.hpp"
#include "qsdctl/asymptotics.hpp"
#include "qsdctl/hjb.hpp"
#include "qsdctl/qsd.hpp"
#include "qsdctl/simulate.hpp"
#include "qsdctl/transient.hpp"
#include "stats.hpp"

using namespace qsdctl;

namespace {

// Oracle values computed outside the library (dense eigendecomposition and
// matrix exponentials, see tests/oracles.hpp) and frozen here.
constexpr double t2_lambda_upper = 0.92902488873415456;
constexpr double t2_lambda_lower = 0.47460806500764718;
constexpr double t2_reference_min = 0.88810380969815439;
constexpr double t2_reference_max = 0.85518450200182705;
// P_3(t < tau) for the logistic chain, expm on 400 states.
const std::map<double, double> logistic_survival_from_3 = {{0.5, 0.73339921892097948},
                                                          {1.0, 0.42639386400574225},
                                                          {2.0, 0.13583081324387802},
                                                          {4.0, 0.013653126198881548}};

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

// Every ValueSolution produced during the run, for the residual criterion.
struct SolveRecord {
  std::string label;
  ModelSpec model;
  ValueSolution solution;
};
std::vector<SolveRecord> solves;

ValueSolution solve_and_record(const std::string& label, const ModelSpec& m, double beta, OptimizationMode mode,
                               const PolicyIterationOptions& o = {}) {
  ValueSolution s = policy_iteration(m, beta, mode, o);
  solves.push_back({label, m, s});
  return s;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

SimConfig sim(std::uint64_t seed, std::uint64_t samples) {
  SimConfig c;
  c.seed = seed;
  c.samples = samples;
  return c;
}

// 1 ----------------------------------------------------------------------
void pure_death_closed_forms(Outcome& o) {
  for (double d : {1.0, 2.0}) {
    const auto start = std::chrono::steady_clock::now();
    const ModelSpec m = fixtures::pure_death(d, 200);
    const auto control = MarkovControl::constant(0, 200);
    const auto g = build_generator(m, control, 200);
    const auto s = solve_qsd(g);
    double eta_err = 0.0;
    for (int x = 1; x <= 200; ++x) eta_err = std::max(eta_err, std::abs(s.eta(x - 1) - x));
    const double tv = total_variation(s.pi, Eigen::VectorXd::Unit(200, 0));
    const Eigen::VectorXd v = evaluate_policy(g, cost_vector(m, control, 200), d / 2.0);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    o.require(std::abs(s.lambda - d) <= 1e-10, "lambda, d=" + fmt(d));
    o.require(tv <= 1e-10, "pi TV, d=" + fmt(d));
    o.require(eta_err <= 1e-8, "eta, d=" + fmt(d));
    o.require(std::abs(v(1) - 2.0 / d) <= 1e-10, "v(1), d=" + fmt(d));
    o.require(seconds < 1.0, "runtime, d=" + fmt(d));
    o.detail << " d=" << d << ": |dlambda|=" << fmt(std::abs(s.lambda - d)) << " tv=" << fmt(tv)
             << " |deta|=" << fmt(eta_err) << " |dv1|=" << fmt(std::abs(v(1) - 2.0 / d)) << " (" << fmt(seconds)
             << " s);";
  }
}

// 2 ----------------------------------------------------------------------
void qsd_defining_property(Outcome& o) {
  std::vector<std::pair<std::string, std::pair<ModelSpec, MarkovControl>>> cases;
  cases.push_back({"pure_death", {fixtures::pure_death(1.0), MarkovControl::constant(0, 200)}});
  cases.push_back({"logistic", {fixtures::logistic(), MarkovControl::constant(0, 200)}});
  cases.push_back({"linear_bd", {fixtures::linear_birth_death(), MarkovControl::constant(0, 200)}});
  for (const auto& c : enumerate_markov_controls(fixtures::t2(), 6)) cases.push_back({"t2", {fixtures::t2(), c}});

  double worst_tv = 0.0;
  double worst_rel = 0.0;
  for (const auto& [name, spec] : cases) {
    const auto& [model, control] = spec;
    const auto g = build_generator(model, control, control.levels());
    const auto s = solve_qsd(g);
    const auto steps = conditional_evolution(g, s.pi, 2.0, 4);
    for (const auto& step : steps) {
      if (step.time != 0.5 && step.time != 1.0 && step.time != 2.0) continue;
      const double tv = total_variation(step.law, s.pi);
      const double expected = std::exp(-s.lambda * step.time);
      const double rel = std::abs(step.survival - expected) / expected;
      worst_tv = std::max(worst_tv, tv);
      worst_rel = std::max(worst_rel, rel);
      if (tv > 1e-8 || rel > 1e-8) o.require(false, name + " " + control.to_string(model.controls) + " t=" + fmt(step.time));
    }
  }
  o.detail << " " << cases.size() << " model/control pairs, max TV " << fmt(worst_tv) << ", max relative survival error "
           << fmt(worst_rel);
}

// 3 ----------------------------------------------------------------------
void eta_limit(Outcome& o) {
  const ModelSpec m = fixtures::logistic(200);
  const auto g = build_generator(m, MarkovControl::constant(0, 200), 200);
  const auto s = solve_qsd(g);
  const std::vector<double> times{1.0, 2.0, 4.0, 8.0};
  const auto d = eta_limit_check(g, s, times, {1});
  for (std::size_t i = 0; i < times.size(); ++i) {
    o.detail << " t=" << times[i] << ":" << fmt(d.eta_deviation[i]);
    if (i > 0) o.require(d.eta_deviation[i] < d.eta_deviation[i - 1], "strict decrease at t=" + fmt(times[i]));
  }
  o.require(d.eta_deviation.back() < 1e-6, "deviation at t=8");
}

// 4 ----------------------------------------------------------------------
void oracle_equivalence(Outcome& o) {
  const ModelSpec m = fixtures::t2();
  const auto generators = ActionGenerators::build(m, 6);
  for (auto mode : {OptimizationMode::min, OptimizationMode::max}) {
    const double lambda_ext = mode == OptimizationMode::min ? t2_lambda_upper : t2_lambda_lower;
    for (double beta : {0.0, 0.3 * lambda_ext}) {
      const std::string tag = std::string(to_string(mode)) + " beta=" + fmt(beta);
      const auto s = solve_and_record("T2 " + tag, m, beta, mode);
      const auto brute = brute_force_control_opt(m, beta, mode, 6);
      if (!s.converged()) {
        o.require(false, tag + " did not converge");
        continue;
      }
      const double diff = (s.value - brute.value).cwiseAbs().maxCoeff();
      const Eigen::VectorXd own =
          evaluate_policy(generators.compose(s.policy), generators.cost_of(s.policy), beta);
      const double equiv = (own - brute.value).cwiseAbs().maxCoeff();
      o.require(diff <= 1e-10, tag + " value");
      o.require(equiv <= 1e-10, tag + " policy value");
      o.detail << " " << tag << ": |v-v_enum|=" << fmt(diff) << " policy " << s.policy.to_string(m.controls) << ";";
    }
  }
}

// 5 ----------------------------------------------------------------------
void hjb_residuals(Outcome& o) {
  // Solves beyond those already recorded by criterion 4.
  for (double beta : {-1.0, 0.0, 0.5, 0.9}) {
    solve_and_record("pure_death min", fixtures::pure_death(1.0), beta, OptimizationMode::min);
    solve_and_record("pure_death max", fixtures::pure_death(1.0), beta, OptimizationMode::max);
  }
  for (double beta : {0.0, 0.5, 1.1}) solve_and_record("logistic min", fixtures::logistic(), beta, OptimizationMode::min);
  for (double beta : {0.0, 0.3}) solve_and_record("linear_bd max", fixtures::linear_birth_death(), beta, OptimizationMode::max);
  for (double beta : {-2.0, -0.5, 0.1, 0.45, 0.47}) solve_and_record("T2 max", fixtures::t2(), beta, OptimizationMode::max);
  for (double beta : {-2.0, 0.2, 0.6, 0.9, 0.929}) solve_and_record("T2 min", fixtures::t2(), beta, OptimizationMode::min);

  double worst = 0.0;
  for (const auto& r : solves) {
    if (!r.solution.converged()) {
      o.require(false, r.label + " beta=" + fmt(r.solution.beta) + " did not converge");
      continue;
    }
    const double residual = hjb_residual(r.model, r.solution.value, r.solution.beta, r.solution.mode).cwiseAbs().maxCoeff();
    const double bound = 1e-9 * (1.0 + r.solution.cost_norm);
    worst = std::max(worst, residual / bound);
    o.require(residual <= bound, r.label + " beta=" + fmt(r.solution.beta));
    o.require(r.solution.hjb_residual <= bound, r.label + " reported residual");
  }
  o.detail << " " << solves.size() << " solves, max residual / bound = " << fmt(worst);
}

// 6 ----------------------------------------------------------------------
void limit_theorems(Outcome& o) {
  LimitOptions opts;
  opts.k_max = 10;
  const auto pd = limit_theorem_check(fixtures::pure_death(1.0), 2, OptimizationMode::max, opts);
  double closed_err = 0.0;
  for (const auto& row : pd.rows) {
    if (!row.usable) {
      o.require(false, "PD row k=" + std::to_string(row.k) + " unusable");
      continue;
    }
    const double excess = (1.0 - row.beta) / (2.0 - row.beta);
    closed_err = std::max(closed_err, std::abs(row.product - (2.0 - excess)));
    o.require(std::abs(row.product - (2.0 - excess)) <= 1e-10, "PD closed form k=" + std::to_string(row.k));
    o.require(std::abs(row.product - 2.0) <= excess + 1e-10 && excess <= row.gap, "PD bound k=" + std::to_string(row.k));
  }
  o.require(pd.rows.size() == 11, "PD grid size");
  o.detail << " PD(1): max |product - closed form| " << fmt(closed_err) << ";";

  for (auto mode : {OptimizationMode::min, OptimizationMode::max}) {
    const auto r = limit_theorem_check(fixtures::t2(), 1, mode, opts);
    const double expected = mode == OptimizationMode::min ? t2_reference_min : t2_reference_max;
    const std::string tag = std::string("T2 ") + std::string(to_string(mode));
    o.require(std::abs(r.reference - expected) <= 1e-10, tag + " reference");
    o.require(r.largest_usable_k == 10, tag + " usable grid");
    o.require(r.bounded, tag + " deviation bounded by C_fit gap");
    o.require(r.stable, tag + " C_fit stable within 30%");
    o.detail << " " << tag << ": C_fit=" << fmt(r.c_fit) << " spread=" << fmt(r.ratio_spread) << ";";
  }
}

// 7 ----------------------------------------------------------------------
void simulator_statistics(Outcome& o) {
  // Gillespie against thinning on pure-death extinction times.
  const ModelSpec pd = fixtures::pure_death(1.0);
  const auto pd_control = MarkovControl::constant(0, 200);
  const auto pd_policy = HistoryPolicy::from_markov("markov", pd_control);
  const auto envelope = Envelope::from_model(pd);
  for (int x0 : {1, 3}) {
    std::vector<double> gillespie;
    std::vector<double> thinning;
    for (std::uint64_t i = 0; i < 10000; ++i) {
      gillespie.push_back(*simulate_markov(pd, pd_control, x0, sim(101, 1), i).extinction_time());
      thinning.push_back(*simulate_thinning(pd, pd_policy, envelope, x0, sim(202, 1), i).extinction_time());
    }
    const auto ks = stats::ks_two_sample(gillespie, thinning);
    o.require(ks.p_value > 0.001, "KS x0=" + std::to_string(x0));
    o.detail << " KS(x0=" << x0 << ") p=" << fmt(ks.p_value) << ";";
  }

  // Survival against the transient solve.
  const ModelSpec logistic = fixtures::logistic();
  const auto control = MarkovControl::constant(0, 200);
  std::vector<double> times;
  for (const auto& [t, p] : logistic_survival_from_3) times.push_back(t);
  const auto est = estimate_survival(logistic, control, 3, times, sim(303, 100000));
  const auto g400 = build_generator(fixtures::logistic(400), MarkovControl::constant(0, 400), 400);
  double worst_z = 0.0;
  for (std::size_t i = 0; i < times.size(); ++i) {
    const double exact = logistic_survival_from_3.at(times[i]);
    const double solved = survival_probabilities(g400, times[i])(2);
    o.require(std::abs(solved - exact) <= 1e-10, "transient solve t=" + fmt(times[i]));
    const double z = std::abs(est[i].mean - solved) / est[i].std_error;
    worst_z = std::max(worst_z, z);
    o.require(z <= 3.0, "survival t=" + fmt(times[i]));
  }
  o.detail << " survival max |z|=" << fmt(worst_z) << ";";

  // Moment bound on the running maximum.
  struct MomentCase {
    std::string name;
    ModelSpec model;
    MarkovControl control;
    int x;
  };
  std::vector<MomentCase> moment_cases{
      {"pure_death", pd, pd_control, 5},
      {"logistic", logistic, control, 5},
      {"linear_bd", fixtures::linear_birth_death(), control, 5},
      {"t2/a1", fixtures::t2(), MarkovControl::constant(0, 6), 3},
      {"t2/a2", fixtures::t2(), MarkovControl::constant(1, 6), 3},
  };
  double worst_ratio = 0.0;
  for (const auto& c : moment_cases) {
    const double growth = *c.model.constants.birth_bound * *c.model.constants.progeny_bound;
    for (double s : {0.5, 1.0, 2.0}) {
      SimConfig cfg = sim(404, 1);
      cfg.horizon = s;
      std::vector<double> maxima;
      for (std::uint64_t i = 0; i < 10000; ++i) {
        maxima.push_back(simulate_markov(c.model, c.control, c.x, cfg, i).running_max(s));
      }
      const auto e = MonteCarloEstimate::from_samples(maxima);
      const double bound = c.x * std::exp(growth * s) * (1.0 + 4.0 * e.std_error / e.mean);
      worst_ratio = std::max(worst_ratio, e.mean / bound);
      o.require(e.mean <= bound, "moment " + c.name + " s=" + fmt(s));
    }
  }
  o.detail << " moment max mean/bound=" << fmt(worst_ratio) << ";";

  // Restart property: X_{s+t} given X_s = y against fresh runs from y.
  struct RestartCase {
    std::string name;
    ModelSpec model;
    MarkovControl control;
    int x;
  };
  std::vector<RestartCase> restart_cases{{"logistic", logistic, control, 5},
                                         {"t2/mixed", fixtures::t2(), MarkovControl({0, 1, 0, 1, 0, 1}), 4}};
  const double s = 0.5;
  const double t = 0.5;
  for (const auto& c : restart_cases) {
    SimConfig cfg = sim(505, 1);
    cfg.horizon = s + t;
    std::vector<Trajectory> runs;
    std::map<int, int> at_s;
    for (std::uint64_t i = 0; i < 40000; ++i) {
      runs.push_back(simulate_markov(c.model, c.control, c.x, cfg, i));
      ++at_s[runs.back().state_at(s)];
    }
    int y = 1;
    for (const auto& [state, count] : at_s) {
      if (state > 0 && count > at_s[y]) y = state;
    }
    std::vector<int> continued;
    for (const auto& r : runs) {
      if (r.state_at(s) == y) continued.push_back(r.state_at(s + t));
    }
    SimConfig fresh_cfg = sim(606, 1);
    fresh_cfg.horizon = t;
    std::vector<int> fresh;
    for (std::uint64_t i = 0; i < 10000; ++i) fresh.push_back(simulate_markov(c.model, c.control, y, fresh_cfg, i).state_at(t));
    const auto chi = stats::chi_square_homogeneity(continued, fresh);
    o.require(chi.p_value > 0.001, "restart " + c.name);
    o.detail << " restart " << c.name << " (y=" << y << ", " << continued.size() << " vs " << fresh.size()
             << ") p=" << fmt(chi.p_value) << ";";
  }
}

// 8 ----------------------------------------------------------------------
void rate_continuation(Outcome& o) {
  for (auto mode : {RateMode::sup, RateMode::inf}) {
    const auto r = optimize_extinction_rate(fixtures::t2(), mode);
    const double expected = mode == RateMode::sup ? t2_lambda_upper : t2_lambda_lower;
    const std::string tag(to_string(mode));
    if (!r.continuation_lambda || !r.enumeration_lambda) {
      o.require(false, tag + " did not run both methods");
      continue;
    }
    const double gap = std::abs(*r.continuation_lambda - *r.enumeration_lambda);
    o.require(r.method == "continuation", tag + " continuation stalled");
    o.require(gap <= 1e-8, tag + " agreement");
    o.require(std::abs(*r.enumeration_lambda - expected) <= 1e-10, tag + " enumeration vs dense oracle");
    o.detail << " " << tag << ": continuation " << fmt(*r.continuation_lambda) << " (" << r.path.size()
             << " steps), |difference|=" << fmt(gap) << ";";
  }
}

// 9 ----------------------------------------------------------------------
void truncation_stability(Outcome& o) {
  const std::vector<int> levels{100, 200};
  const auto rows = truncation_sweep(fixtures::logistic(200), MarkovControl::constant(0, 200), levels);
  o.require(rows[0].lambda_difference <= 1e-8, "lambda");
  o.require(rows[0].tv_to_largest <= 1e-8, "TV");
  o.detail << " |lambda_100 - lambda_200|=" << fmt(rows[0].lambda_difference) << " TV=" << fmt(rows[0].tv_to_largest);
}

// 10 ---------------------------------------------------------------------
void corollary(Outcome& o) {
  const ModelSpec m = fixtures::t2();
  const double beta = t2_lambda_lower / 2.0;
  const auto markov = solve_and_record("T2 max corollary", m, beta, OptimizationMode::max).policy;
  const auto policies = shipped_history_policies(m.action_count(), markov);
  SimConfig cfg = sim(707, 20000);
  const auto report = corollary_spot_check(m, 2, OptimizationMode::max, policies, beta, cfg);
  o.detail << " w(2)=" << fmt(report.solver_value) << ";";
  for (const auto& row : report.rows) {
    o.require(row.within, row.policy);
    o.detail << " " << row.policy << "=" << fmt(row.estimate.mean) << "+-" << fmt(row.estimate.std_error);
  }
  o.require(report.rows.size() == policies.size(), "every policy reported");
}

struct Criterion {
  int id;
  std::string name;
  double budget_seconds;
  std::function<void(Outcome&)> body;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria{
      {1, "pure-death closed forms", 2.0, pure_death_closed_forms},
      {2, "QSD defining property", 10.0, qsd_defining_property},
      {3, "eta limit on logistic", 10.0, eta_limit},
      {4, "T2 policy iteration vs enumeration", 30.0, oracle_equivalence},
      {5, "HJB residuals", 60.0, hjb_residuals},
      {6, "limit theorems", 120.0, limit_theorems},
      {7, "simulator statistics", 300.0, simulator_statistics},
      {8, "rate-optimum continuation", 60.0, rate_continuation},
      {9, "truncation stability", 10.0, truncation_stability},
      {10, "corollary spot checks", 120.0, corollary},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  // Criterion 5 audits every solve made by the others, so it runs last.
  std::vector<const Criterion*> order;
  for (const auto& c : criteria) {
    if (c.id != 5) order.push_back(&c);
  }
  order.push_back(&criteria[4]);

  int failures = 0;
  std::map<int, std::string> lines;
  for (const Criterion* c : order) {
    if (!selected.empty() && !selected.count(c->id)) continue;
    Outcome outcome;
    const auto start = std::chrono::steady_clock::now();
    try {
      c->body(outcome);
    } catch (const std::exception& e) {
      outcome.require(false, std::string("exception: ") + e.what());
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    outcome.require(seconds < c->budget_seconds, "runtime budget " + fmt(c->budget_seconds) + " s");
    failures += outcome.pass ? 0 : 1;
    std::ostringstream line;
    line << (outcome.pass ? "PASS" : "FAIL") << " [" << c->id << "] " << c->name << " (" << fmt(seconds) << " s):"
         << outcome.detail.str();
    lines[c->id] = line.str();
    std::fprintf(stderr, "%s\n", line.str().c_str());
  }
  for (const auto& [id, line] : lines) std::printf("%s\n", line.c_str());
  std::printf("%d of %zu criteria failed\n", failures, lines.size());
  return failures == 0 ? 0 : 1;
}
