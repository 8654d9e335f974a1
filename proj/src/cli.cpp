#include "qsdctl/cli.hpp"

#include <filesystem>
#include <optional>

#include <CLI11.hpp>

#include "qsdctl/asymptotics.hpp"
#include "qsdctl/io.hpp"
#include "qsdctl/model_file.hpp"
#include "qsdctl/parallel.hpp"

namespace qsdctl::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// A refusal the mathematics justifies (exit code 2).
class Diagnostic : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string model;
  std::string out = ".";
  std::uint64_t seed = 1;
  std::optional<double> beta;
  std::string mode;
  std::optional<double> tol;
  int max_iter = 500;
  std::vector<int> levels;
  std::uint64_t samples = 1000;
  int state = 1;
  std::vector<double> times;
  std::string action;
  std::vector<std::string> policy;
  int k_max = 10;
  std::optional<double> beta0;
  std::optional<double> horizon;
  int trajectories = 0;
  std::optional<double> conditional;
  std::string manifest;
  bool diagnose = false;
};

struct Run {
  Options options;
  ModelSpec model;
  fs::path out_dir;
  io::RunManifest manifest;
  std::ostream* out = nullptr;
  std::ostream* err = nullptr;

  fs::path output(const std::string& name) {
    manifest.outputs.push_back(name);
    return out_dir / name;
  }
};

int single_level(const Run& run) {
  if (run.options.levels.size() > 1) throw std::invalid_argument("this command takes a single --levels value");
  return run.options.levels.empty() ? run.model.truncation : run.options.levels.front();
}

MarkovControl resolve_control(const Run& run, int levels) {
  const auto& controls = run.model.controls;
  auto index_of = [&](const std::string& name) {
    const auto found = controls.find(name);
    if (!found) throw std::invalid_argument("unknown action '" + name + "'");
    return *found;
  };
  if (!run.options.policy.empty()) {
    if (!run.options.action.empty()) throw std::invalid_argument("--action and --policy are exclusive");
    if (static_cast<int>(run.options.policy.size()) > levels) {
      throw std::invalid_argument("--policy lists more states than the truncation level");
    }
    std::vector<std::size_t> actions;
    for (const auto& name : run.options.policy) actions.push_back(index_of(name));
    return MarkovControl(std::move(actions)).resized(levels);
  }
  const std::size_t a = run.options.action.empty() ? 0 : index_of(run.options.action);
  return MarkovControl::constant(a, levels);
}

json policy_json(const MarkovControl& control, const ControlSet& controls) {
  json names = json::array();
  for (std::size_t a : control.actions()) names.push_back(controls[a].name);
  return names;
}

OptimizationMode value_mode(const Options& o) { return parse_mode(o.mode.empty() ? "min" : o.mode); }

// validate ---------------------------------------------------------------

int cmd_validate(Run& run) {
  const int levels = single_level(run);
  const auto report = validate_hypotheses(run.model, levels);
  json checks = json::array();
  for (const auto& check : report.checks) {
    json entry = {{"id", check.id},
                  {"description", check.description},
                  {"status", std::string(to_string(check.status))},
                  {"note", check.note}};
    if (check.witness) {
      entry["witness"] = {{"state", check.witness->state},
                          {"action", run.model.controls[check.witness->action].name},
                          {"margin", check.witness->margin}};
    }
    checks.push_back(entry);
  }
  io::write_json(run.output("report.json"),
                 {{"model", run.model.name}, {"max_state", levels}, {"all_pass", report.all_pass()}, {"checks", checks}});
  for (const auto& check : report.checks) {
    *run.out << check.id << ": " << to_string(check.status) << '\n';
    if (check.status == HypothesisStatus::fail) *run.err << "warning: " << check.id << " fails; " << check.note << '\n';
  }
  return exit_ok;
}

// simulate ---------------------------------------------------------------

int cmd_simulate(Run& run) {
  const auto& o = run.options;
  const int levels = run.model.truncation;
  const MarkovControl control = resolve_control(run, levels);
  SimConfig config;
  config.seed = o.seed;
  config.samples = o.samples;
  if (!o.levels.empty()) config.lump_at = single_level(run);
  run.manifest.seeds.push_back(o.seed);

  std::vector<double> times = o.times.empty() ? std::vector<double>{1.0} : o.times;
  const auto survival = estimate_survival(run.model, control, o.state, times, config);
  io::CsvWriter csv(run.output("estimates.csv"),
                    {"time (s)", "estimate (probability)", "stderr (probability)", "n (samples)"});
  for (std::size_t i = 0; i < times.size(); ++i) {
    csv.cell(times[i]).cell(survival[i].mean).cell(survival[i].std_error);
    csv.cell(static_cast<std::int64_t>(survival[i].samples)).end_row();
  }

  if (o.trajectories > 0) {
    SimConfig single = config;
    single.horizon = o.horizon;
    io::CsvWriter traj(run.output("trajectories.csv"), {"trajectory (index)", "time (s)", "state (individuals)"});
    for (int i = 0; i < o.trajectories; ++i) {
      const auto t = simulate_markov(run.model, control, o.state, single, static_cast<std::uint64_t>(i));
      traj.cell(std::int64_t{i}).cell(0.0).cell(std::int64_t{t.initial_state}).end_row();
      for (const auto& jump : t.jumps) traj.cell(std::int64_t{i}).cell(jump.time).cell(std::int64_t{jump.state}).end_row();
    }
  }

  json summary = {{"state", o.state}, {"samples", o.samples}, {"seed", o.seed}};
  if (o.beta) {
    const auto cost = estimate_cost(run.model, control, o.state, *o.beta, config);
    summary["cost"] = {{"beta", *o.beta},       {"estimate", cost.mean}, {"stderr", cost.std_error},
                       {"lower", cost.lower},   {"upper", cost.upper},   {"warnings", cost.warnings}};
    for (const auto& w : cost.warnings) *run.err << "warning: " << w << '\n';
  }
  int code = exit_ok;
  if (o.conditional) {
    try {
      const auto law = estimate_conditional_law(run.model, control, o.state, *o.conditional, config);
      io::CsvWriter csv_law(run.output("conditional.csv"), {"state (individuals)", "probability (1)"});
      for (std::size_t s = 0; s < law.law.size(); ++s) {
        csv_law.cell(static_cast<std::int64_t>(s + 1)).cell(law.law[s]).end_row();
      }
      summary["conditional"] = {{"time", *o.conditional}, {"survivors", law.survivors},
                                {"low_confidence", law.low_confidence}};
    } catch (const SimulationError& e) {
      summary["conditional"] = {{"time", *o.conditional}, {"survivors", 0}, {"diagnostic", e.what()}};
      *run.err << "diagnostic: " << e.what() << '\n';
      code = exit_diagnostic;
    }
  }
  io::write_json(run.output("simulate.json"), summary);
  *run.out << "survival at t=" << io::format_double(times.back()) << ": " << io::format_double(survival.back().mean)
           << " +- " << io::format_double(survival.back().std_error) << '\n';
  return code;
}

// qsd --------------------------------------------------------------------

int cmd_qsd(Run& run) {
  const auto& o = run.options;
  const int levels = o.levels.empty() ? run.model.truncation : o.levels.back();
  const MarkovControl control = resolve_control(run, levels);
  QsdOptions qo;
  if (o.tol) qo.tol = *o.tol;
  const auto generator = build_generator(run.model, control, levels);
  QsdSolution qsd;
  try {
    qsd = solve_qsd(generator, qo);
  } catch (const QsdError& e) {
    throw Diagnostic(e.what());
  }

  io::CsvWriter csv(run.output("qsd.csv"), {"state (individuals)", "pi (probability)", "eta (1)"});
  for (int x = 1; x <= levels; ++x) csv.cell(std::int64_t{x}).cell(qsd.pi(x - 1)).cell(qsd.eta(x - 1)).end_row();

  json summary = {{"levels", levels},
                  {"lambda", qsd.lambda},
                  {"residual_left", qsd.residual_left},
                  {"residual_right", qsd.residual_right},
                  {"iterations", qsd.iterations},
                  {"pi_f", qsd.mean_of(cost_vector(run.model, control, levels))},
                  {"policy", policy_json(control, run.model.controls)},
                  {"warnings", qsd.warnings}};

  if (o.levels.size() > 1) {
    const auto rows = truncation_sweep(run.model, control, o.levels, qo);
    io::CsvWriter sweep(run.output("truncation.csv"),
                        {"levels (individuals)", "lambda (1/s)", "lambda_difference (1/s)", "tv_to_largest (1)"});
    for (const auto& row : rows) {
      sweep.cell(std::int64_t{row.levels}).cell(row.lambda).cell(row.lambda_difference).cell(row.tv_to_largest).end_row();
    }
  }
  if (o.diagnose || !o.times.empty()) {
    const std::vector<double> times = o.times.empty() ? std::vector<double>{1.0, 2.0, 4.0, 8.0} : o.times;
    const auto diag = eta_limit_check(generator, qsd, times);
    io::CsvWriter conv(run.output("convergence.csv"), {"time (s)", "eta_deviation (1)", "max_tv (1)"});
    for (std::size_t i = 0; i < diag.times.size(); ++i) {
      double tv = 0.0;
      for (double v : diag.tv[i]) tv = std::max(tv, v);
      conv.cell(diag.times[i]).cell(diag.eta_deviation[i]).cell(tv).end_row();
    }
    summary["fitted_eta_rate"] = diag.fitted_eta_rate;
    summary["fitted_tv_rate"] = diag.fitted_tv_rate;
  }
  try {
    const auto lyapunov = lyapunov_threshold(run.model, qsd.lambda, levels);
    summary["lyapunov"] = {{"threshold", lyapunov.threshold}, {"margin", lyapunov.margin}};
  } catch (const std::exception& e) {
    summary["lyapunov"] = {{"note", e.what()}};
  }
  io::write_json(run.output("qsd.json"), summary);
  *run.out << "lambda = " << io::format_double(qsd.lambda) << '\n';
  return exit_ok;
}

// solve ------------------------------------------------------------------

int cmd_solve(Run& run) {
  const auto& o = run.options;
  if (!o.beta) throw std::invalid_argument("solve requires --beta");
  const OptimizationMode mode = value_mode(o);
  PolicyIterationOptions pio;
  pio.levels = single_level(run);
  pio.max_iter = o.max_iter;
  if (o.tol) pio.tol = *o.tol;
  const auto solution = policy_iteration(run.model, *o.beta, mode, pio);

  const double bound = 1e-9 * (1.0 + solution.cost_norm);
  json trace = json::array();
  for (const auto& r : solution.trace) {
    trace.push_back({{"policy_changes", r.policy_changes}, {"value_delta", r.value_delta},
                     {"wrong_direction", r.wrong_direction}});
  }
  json summary = {{"mode", std::string(to_string(mode))},
                  {"beta", *o.beta},
                  {"levels", pio.levels},
                  {"termination", std::string(to_string(solution.termination))},
                  {"diagnostic", solution.diagnostic},
                  {"hjb_residual", solution.hjb_residual},
                  {"residual_bound", bound},
                  {"tol", pio.tol},
                  {"policy", policy_json(solution.policy, run.model.controls)},
                  {"trace", trace}};
  if (solution.transversality) {
    summary["transversality"] = {{"holds", solution.transversality->holds},
                                 {"margin", solution.transversality->margin},
                                 {"lambda", solution.transversality->lambda}};
  }
  if (solution.value.size() > 0) {
    io::CsvWriter csv(run.output("value.csv"), {"state (individuals)", "value (cost*s)", "action (name)"});
    for (int x = 0; x < solution.value.size(); ++x) {
      csv.cell(std::int64_t{x}).cell(solution.value(x));
      csv.cell(x == 0 ? std::string("-") : run.model.controls[solution.policy(x)].name).end_row();
    }
  }
  io::write_json(run.output("solve.json"), summary);

  if (solution.termination == Termination::evaluation_diverged) throw Diagnostic(solution.diagnostic);
  if (solution.termination == Termination::max_iter) throw std::runtime_error(solution.diagnostic);
  if (solution.hjb_residual > pio.tol) {
    *run.err << "warning: HJB residual " << io::format_double(solution.hjb_residual) << " exceeds --tol\n";
  }
  *run.out << "v(" << std::min(o.state, pio.levels) << ") = " << io::format_double(solution.value(std::min(o.state, pio.levels)))
           << ", residual " << io::format_double(solution.hjb_residual) << '\n';
  return exit_ok;
}

// rate-opt ---------------------------------------------------------------

int cmd_rate_opt(Run& run) {
  const auto& o = run.options;
  RateOptions ro;
  ro.levels = single_level(run);
  if (o.tol) ro.tol = *o.tol;
  const RateMode mode = parse_rate_mode(o.mode.empty() ? "sup" : o.mode);
  const auto optimum = optimize_extinction_rate(run.model, mode, ro);

  json path = json::array();
  for (const auto& step : optimum.path) path.push_back({{"beta", step.beta}, {"lambda", step.lambda}});
  json summary = {{"mode", std::string(to_string(mode))},
                  {"lambda_star", optimum.lambda_star},
                  {"method", optimum.method},
                  {"optimizer", policy_json(optimum.optimizer, run.model.controls)},
                  {"path", path},
                  {"stalled", optimum.stalled},
                  {"refusals", optimum.refusals},
                  {"diagnostic", optimum.diagnostic},
                  {"tol", ro.tol}};
  if (optimum.continuation_lambda) summary["continuation_lambda"] = *optimum.continuation_lambda;
  if (optimum.enumeration_lambda) summary["enumeration_lambda"] = *optimum.enumeration_lambda;
  if (optimum.agreement) summary["agreement"] = *optimum.agreement;
  io::write_json(run.output("rate.json"), summary);
  if (optimum.stalled && optimum.method != "enumeration") throw Diagnostic(optimum.diagnostic);
  *run.out << (mode == RateMode::sup ? "lambda* = " : "lambda_* = ") << io::format_double(optimum.lambda_star) << " ("
           << optimum.method << ")\n";
  return exit_ok;
}

// limit ------------------------------------------------------------------

int cmd_limit(Run& run) {
  const auto& o = run.options;
  LimitOptions lo;
  lo.levels = single_level(run);
  lo.k_max = o.k_max;
  lo.beta0 = o.beta0;
  const OptimizationMode mode = value_mode(o);
  const auto report = limit_theorem_check(run.model, o.state, mode, lo);

  io::CsvWriter csv(run.output("limit.csv"), {"k (1)", "beta (1/s)", "gap (1/s)", "value (cost*s)", "product (cost)",
                                              "reference (cost)", "deviation (cost)", "usable (bool)"});
  for (const auto& row : report.rows) {
    csv.cell(std::int64_t{row.k}).cell(row.beta).cell(row.gap).cell(row.value).cell(row.product);
    csv.cell(report.reference).cell(row.deviation).cell(std::string(row.usable ? "true" : "false")).end_row();
  }
  json summary = {{"mode", std::string(to_string(mode))},
                  {"state", report.state},
                  {"lambda_ext", report.lambda_ext},
                  {"beta0", report.beta0},
                  {"reference", report.reference},
                  {"reference_source", report.reference_source},
                  {"largest_usable_k", report.largest_usable_k},
                  {"c_fit", report.c_fit},
                  {"ratio_spread", report.ratio_spread},
                  {"stable", report.stable},
                  {"bounded", report.bounded},
                  {"deviation_decreasing", report.deviation_decreasing},
                  {"inconclusive", report.inconclusive}};
  if (report.reference_attained) summary["reference_attained"] = *report.reference_attained;
  io::write_json(run.output("limit.json"), summary);
  if (report.largest_usable_k < o.k_max) {
    *run.err << "diagnostic: HJB refused beyond k = " << report.largest_usable_k << '\n';
  }
  *run.out << "reference = " << io::format_double(report.reference) << ", c_fit = " << io::format_double(report.c_fit)
           << (report.inconclusive ? " (inconclusive)" : "") << '\n';
  return report.largest_usable_k < 0 ? exit_diagnostic : exit_ok;
}

// oracle -----------------------------------------------------------------

int cmd_oracle(Run& run) {
  const auto& o = run.options;
  const double beta = o.beta.value_or(0.0);
  const OptimizationMode mode = value_mode(o);
  const int levels = single_level(run);
  EnumerationResult result;
  try {
    result = brute_force_control_opt(run.model, beta, mode, levels);
  } catch (const EvaluationError& e) {
    throw Diagnostic(e.what());
  }
  const int x = std::clamp(o.state, 1, levels);
  std::vector<std::string> header = {"control_id (index)", "policy (names)", "lambda (1/s)", "pi_f (cost)",
                                     "feasible (bool)", "value_x (cost*s)"};
  for (int s = 1; s <= levels; ++s) header.push_back("eta_" + std::to_string(s) + " (1)");
  io::CsvWriter csv(run.output("oracle.csv"), header);
  for (const auto& row : result.table) {
    std::string names;
    for (std::size_t a : row.control.actions()) names += (names.empty() ? "" : " ") + run.model.controls[a].name;
    csv.cell(static_cast<std::int64_t>(row.id)).cell(names).cell(row.lambda).cell(row.pi_f);
    csv.cell(std::string(row.refused ? "false" : "true"));
    csv.cell(row.refused ? std::numeric_limits<double>::infinity() : row.value(x));
    for (int s = 0; s < levels; ++s) csv.cell(row.eta(s));
    csv.end_row();
  }
  std::vector<double> value(result.value.data(), result.value.data() + result.value.size());
  io::write_json(run.output("oracle.json"), {{"mode", std::string(to_string(mode))},
                                             {"beta", beta},
                                             {"levels", levels},
                                             {"controls", result.table.size()},
                                             {"optimizer_id", result.optimizer_id},
                                             {"optimizer", policy_json(result.optimizer, run.model.controls)},
                                             {"attains_pointwise", result.attains_pointwise},
                                             {"bounded", result.bounded},
                                             {"value", value}});
  *run.out << result.table.size() << " controls; optimizer id " << result.optimizer_id << '\n';
  if (!result.bounded) throw Diagnostic("beta is not below the extinction rate of every control; the maximum is infinite");
  return exit_ok;
}

// CLI wiring ---------------------------------------------------------------

void add_model(CLI::App* sub, Options& o) {
  sub->add_option("model,--model", o.model, "model file")->check(CLI::ExistingFile);
  sub->add_option("--out", o.out, "output directory");
  sub->add_option("--levels", o.levels, "truncation level(s), comma-separated")->delimiter(',');
}

void add_control(CLI::App* sub, Options& o) {
  sub->add_option("--action", o.action, "constant action name");
  sub->add_option("--policy", o.policy, "action names for states 1, 2, ...; the last one repeats")->delimiter(',');
}

json recorded_flags(const CLI::App* sub) {
  json flags = json::object();
  for (const CLI::Option* opt : sub->get_options()) {
    if (opt->count() == 0 || opt->get_name() == "--help") continue;
    flags[opt->get_name()] = opt->results();
  }
  return flags;
}

std::vector<std::string> replay_arguments(const io::RunManifest& manifest, const std::string& out_dir) {
  std::vector<std::string> args;
  for (std::size_t i = 0; i < manifest.arguments.size(); ++i) {
    const auto& arg = manifest.arguments[i];
    if (arg == "--out") {
      ++i;
      continue;
    }
    if (arg.rfind("--out=", 0) == 0) continue;
    args.push_back(arg);
  }
  args.push_back("--out");
  args.push_back(out_dir);
  return args;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Quasi-stationary distributions and discounted control of branching processes", "qsdctl"};
  app.require_subcommand(1);
  app.set_version_flag("--version", io::tool_version);
  Options o;

  auto* validate = app.add_subcommand("validate", "check the model's standing hypotheses");
  add_model(validate, o);

  auto* simulate = app.add_subcommand("simulate", "Monte-Carlo survival, conditional law and cost estimates");
  add_model(simulate, o);
  add_control(simulate, o);
  simulate->add_option("--seed", o.seed);
  simulate->add_option("--samples", o.samples)->check(CLI::PositiveNumber);
  simulate->add_option("--state", o.state);
  simulate->add_option("--times", o.times)->delimiter(',');
  simulate->add_option("--beta", o.beta, "estimate the discounted cost as well");
  simulate->add_option("--horizon", o.horizon, "horizon for emitted trajectories");
  simulate->add_option("--trajectories", o.trajectories, "number of trajectories to emit");
  simulate->add_option("--conditional", o.conditional, "estimate the conditional law at this time");

  auto* qsd = app.add_subcommand("qsd", "quasi-stationary distribution, extinction rate, eigenfunction");
  add_model(qsd, o);
  add_control(qsd, o);
  qsd->add_option("--tol", o.tol);
  qsd->add_option("--times", o.times, "time grid for the eta-limit diagnostics")->delimiter(',');
  qsd->add_flag("--diagnose", o.diagnose, "write convergence.csv (default grid 1,2,4,8)");

  auto* solve = app.add_subcommand("solve", "discounted HJB by policy iteration");
  add_model(solve, o);
  solve->add_option("--beta", o.beta)->required();
  solve->add_option("--mode", o.mode)->check(CLI::IsMember({"min", "max"}));
  solve->add_option("--tol", o.tol);
  solve->add_option("--max-iter", o.max_iter);
  solve->add_option("--state", o.state, "state echoed in the summary line");

  auto* rate = app.add_subcommand("rate-opt", "extremal extinction rate over Markov controls");
  add_model(rate, o);
  rate->add_option("--mode", o.mode)->check(CLI::IsMember({"sup", "inf"}));
  rate->add_option("--tol", o.tol);

  auto* limit = app.add_subcommand("limit", "value times rate gap against the extremal pi(f) eta");
  add_model(limit, o);
  limit->add_option("--mode", o.mode)->check(CLI::IsMember({"min", "max"}));
  limit->add_option("--state", o.state);
  limit->add_option("--k-max", o.k_max);
  limit->add_option("--beta0", o.beta0);

  auto* oracle = app.add_subcommand("oracle", "exhaustive enumeration of Markov controls");
  add_model(oracle, o);
  oracle->add_option("--beta", o.beta);
  oracle->add_option("--mode", o.mode)->check(CLI::IsMember({"min", "max"}));
  oracle->add_option("--state", o.state);

  auto* replay = app.add_subcommand("replay", "re-run the command recorded in a manifest");
  replay->add_option("manifest", o.manifest)->required()->check(CLI::ExistingFile);
  replay->add_option("--out", o.out, "output directory for the replayed run");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return exit_ok;
  } catch (const CLI::CallForVersion&) {
    out << io::tool_version << '\n';
    return exit_ok;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return exit_error;
  }

  if (replay->parsed()) {
    try {
      const auto manifest = io::RunManifest::from_json(io::read_json(o.manifest));
      if (!manifest.model_path.empty() && io::sha256_hex(manifest.model_path) != manifest.model_sha256) {
        err << "error: model file " << manifest.model_path << " changed since the recorded run\n";
        return exit_error;
      }
      return run(replay_arguments(manifest, o.out), out, err);
    } catch (const std::exception& e) {
      err << "error: " << e.what() << '\n';
      return exit_error;
    }
  }

  CLI::App* sub = app.get_subcommands().front();
  Run ctx;
  ctx.options = o;
  ctx.out = &out;
  ctx.err = &err;
  ctx.manifest.command = sub->get_name();
  ctx.manifest.arguments = args;
  ctx.manifest.flags = recorded_flags(sub);
  ctx.manifest.started = io::utc_timestamp();
  ctx.out_dir = o.out;

  int code = exit_ok;
  try {
    if (o.model.empty()) throw std::invalid_argument("a model file is required");
    fs::create_directories(ctx.out_dir);
    ctx.manifest.model_path = fs::absolute(o.model).string();
    ctx.manifest.model_sha256 = io::sha256_hex(o.model);
    ctx.model = load_model(o.model);
    for (const auto& check : validate_hypotheses(ctx.model, std::max(2, ctx.model.truncation)).checks) {
      if (check.status == HypothesisStatus::fail && sub != validate) {
        err << "warning: hypothesis " << check.id << " fails on this model; proceeding\n";
      }
    }
    const std::string name = sub->get_name();
    if (name == "validate") code = cmd_validate(ctx);
    else if (name == "simulate") code = cmd_simulate(ctx);
    else if (name == "qsd") code = cmd_qsd(ctx);
    else if (name == "solve") code = cmd_solve(ctx);
    else if (name == "rate-opt") code = cmd_rate_opt(ctx);
    else if (name == "limit") code = cmd_limit(ctx);
    else code = cmd_oracle(ctx);
  } catch (const Diagnostic& e) {
    err << "diagnostic: " << e.what() << '\n';
    code = exit_diagnostic;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    code = exit_error;
  }

  ctx.manifest.finished = io::utc_timestamp();
  ctx.manifest.exit_code = code;
  if (fs::is_directory(ctx.out_dir)) {
    try {
      io::write_json(ctx.out_dir / "manifest.json", ctx.manifest.to_json());
    } catch (const std::exception& e) {
      err << "error: " << e.what() << '\n';
      return exit_error;
    }
  }
  return code;
}

}  // namespace qsdctl::cli
