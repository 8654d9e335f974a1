#include "qsdctl/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "qsdctl/generator.hpp"
#include "qsdctl/parallel.hpp"
#include "qsdctl/qsd.hpp"

namespace qsdctl {

namespace {

struct Rates {
  double birth = 0.0;
  double death = 0.0;
  std::vector<double> cumulative;  // P(offspring <= k), k = 1..k_max
};

// Lazily evaluated (state, action) rates. One instance per worker.
class RateCache {
 public:
  explicit RateCache(const ModelSpec& model) : model_(model) {}

  const Rates& at(int x, std::size_t action) {
    const std::size_t m = model_.action_count();
    const std::size_t key = static_cast<std::size_t>(x) * m + action;
    if (key >= entries_.size()) entries_.resize(std::max(key + 1, 2 * entries_.size()));
    auto& slot = entries_[key];
    if (!slot) {
      Rates r;
      r.birth = model_.birth_rate(x, action);
      r.death = model_.death_rate(x, action);
      if (!std::isfinite(r.birth) || !std::isfinite(r.death) || r.birth < 0.0 || r.death < 0.0) {
        throw ModelError("invalid rate at state " + std::to_string(x) + ", action '" + model_.controls[action].name +
                         "'");
      }
      if (r.birth > 0.0) {
        const auto p = model_.offspring(x, action);
        double acc = 0.0;
        for (double w : p) r.cumulative.push_back(acc += w);
        r.cumulative.back() = 1.0;
      }
      slot = std::move(r);
    }
    return *slot;
  }

 private:
  const ModelSpec& model_;
  std::vector<std::optional<Rates>> entries_;
};

int sample_offspring(const Rates& rates, double u) {
  const auto it = std::upper_bound(rates.cumulative.begin(), rates.cumulative.end(), u);
  return static_cast<int>(std::min<std::ptrdiff_t>(it - rates.cumulative.begin(), rates.cumulative.size() - 1)) + 1;
}

// Applies a birth of k individuals at x; returns the new state.
int birth_target(int x, int k, const SimConfig& config) {
  int target = x + k;
  if (config.lump_at && x <= *config.lump_at) target = std::min(target, *config.lump_at);
  return target;
}

void check_config(int x0, const SimConfig& config) {
  if (x0 < 0) throw std::invalid_argument("initial state must be non-negative");
  if (config.samples < 1) throw std::invalid_argument("sample count must be >= 1");
  if (config.state_cap <= x0) throw std::invalid_argument("state cap must exceed the initial state");
  if (config.horizon && *config.horizon < 0.0) throw std::invalid_argument("negative horizon");
}

Trajectory run_markov(RateCache& cache, const MarkovControl& control, int x0, const SimConfig& config,
                      RandomStream& rng) {
  Trajectory traj;
  traj.initial_state = x0;
  const double horizon = config.horizon.value_or(std::numeric_limits<double>::infinity());
  double t = 0.0;
  int x = x0;
  for (;;) {
    if (x == 0) {
      traj.terminal = TerminalFlag::absorbed;
      traj.end_time = t;
      return traj;
    }
    const std::size_t a = control(x);
    traj.final_action = a;
    const Rates& r = cache.at(x, a);
    const double total = r.birth + r.death;
    const double next = total > 0.0 ? t + rng.exponential(total) : std::numeric_limits<double>::infinity();
    if (next > horizon || std::isinf(next)) {
      traj.terminal = TerminalFlag::horizon_reached;
      traj.end_time = horizon;
      return traj;
    }
    t = next;
    const double u = rng.uniform() * total;
    int target;
    if (u < r.birth) {
      target = birth_target(x, sample_offspring(r, rng.uniform()), config);
      if (target == x) continue;
    } else {
      target = x - 1;
    }
    traj.jumps.push_back({t, target, a});
    x = target;
    if (x > config.state_cap) {
      traj.terminal = TerminalFlag::state_cap_reached;
      traj.end_time = t;
      return traj;
    }
  }
}

Trajectory run_thinning(RateCache& cache, const ModelSpec& model, const HistoryPolicy& policy,
                        const Envelope& envelope, int x0, const SimConfig& config, RandomStream& rng) {
  Trajectory traj;
  traj.initial_state = x0;
  const double horizon = config.horizon.value_or(std::numeric_limits<double>::infinity());
  double t = 0.0;
  int x = x0;
  for (;;) {
    if (x == 0) {
      traj.terminal = TerminalFlag::absorbed;
      traj.end_time = t;
      return traj;
    }
    const double birth_env = envelope.birth_per_capita * x;
    const double death_env = envelope.death(x);
    const double total = birth_env + death_env;
    const double next = total > 0.0 ? t + rng.exponential(total) : std::numeric_limits<double>::infinity();
    if (next > horizon || std::isinf(next)) {
      traj.terminal = TerminalFlag::horizon_reached;
      traj.end_time = horizon;
      traj.final_action = policy.rule(std::isinf(horizon) ? t : horizon, traj);
      return traj;
    }
    t = next;
    const std::size_t a = policy.rule(t, traj);
    if (a >= model.action_count()) throw SimulationError("policy '" + policy.name + "' returned an invalid action");
    traj.final_action = a;
    const Rates& r = cache.at(x, a);
    if (r.birth > birth_env * (1.0 + 1e-12) || r.death > death_env * (1.0 + 1e-12)) {
      throw SimulationError("envelope violated at state " + std::to_string(x) + ", action '" +
                            model.controls[a].name + "'");
    }
    const double z = rng.uniform() * total;
    int target;
    if (z < birth_env) {
      if (z >= r.birth) continue;
      // The mark z lies in I_k = [b F(k-1), b F(k)).
      target = birth_target(x, sample_offspring(r, z / r.birth), config);
      if (target == x) continue;
    } else {
      if (z - birth_env >= r.death) continue;
      target = x - 1;
    }
    traj.jumps.push_back({t, target, a});
    x = target;
    if (x > config.state_cap) {
      traj.terminal = TerminalFlag::state_cap_reached;
      traj.end_time = t;
      return traj;
    }
  }
}

// Discounted cost along a trajectory; the last interval is charged up to end_time.
template <typename CostOf>
double trajectory_cost(const Trajectory& traj, double beta, CostOf&& cost) {
  double sum = 0.0;
  double start = 0.0;
  int state = traj.initial_state;
  for (const Jump& jump : traj.jumps) {
    sum += cost(state, jump.action) * discounted_duration(beta, start, jump.time);
    start = jump.time;
    state = jump.state;
  }
  if (state != 0 && traj.end_time > start) {
    sum += cost(state, traj.final_action) * discounted_duration(beta, start, traj.end_time);
  }
  return sum;
}

template <typename Simulate, typename Reduce>
std::vector<double> sample_values(const SimConfig& config, Simulate&& simulate, Reduce&& reduce) {
  std::vector<double> values(config.samples);
  parallel_for(config.samples, [&](std::size_t i, std::size_t worker) {
    values[i] = reduce(simulate(i, worker));
  });
  return values;
}

}  // namespace

std::string_view to_string(TerminalFlag flag) {
  switch (flag) {
    case TerminalFlag::absorbed: return "absorbed";
    case TerminalFlag::horizon_reached: return "horizon-reached";
    case TerminalFlag::state_cap_reached: return "state-cap-reached";
  }
  return "?";
}

int Trajectory::state_at(double t) const {
  int state = initial_state;
  for (const Jump& jump : jumps) {
    if (jump.time > t) break;
    state = jump.state;
  }
  return state;
}

int Trajectory::running_max(double t) const {
  int out = initial_state;
  for (const Jump& jump : jumps) {
    if (jump.time > t) break;
    out = std::max(out, jump.state);
  }
  return out;
}

std::optional<double> Trajectory::extinction_time() const {
  if (terminal == TerminalFlag::absorbed) return end_time;
  return std::nullopt;
}

RandomStream::RandomStream(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  engine_.seed(seq);
}

double RandomStream::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

double RandomStream::exponential(double rate) { return -std::log1p(-uniform()) / rate; }

Trajectory simulate_markov(const ModelSpec& model, const MarkovControl& control, int x0, const SimConfig& config,
                           std::uint64_t stream) {
  check_config(x0, config);
  control.check(model.action_count());
  RateCache cache(model);
  RandomStream rng(config.seed, stream);
  return run_markov(cache, control, x0, config, rng);
}

HistoryPolicy HistoryPolicy::from_markov(std::string name, MarkovControl control) {
  return {std::move(name), [control = std::move(control)](double, const Trajectory& past) {
            return control(past.state());
          }};
}

Envelope Envelope::from_model(const ModelSpec& model) {
  if (!model.constants.birth_bound || !model.constants.death_bound) {
    throw ModelError("thinning needs declared b_bar and d_bar");
  }
  return {*model.constants.birth_bound,
          [bound = *model.constants.death_bound](int x) { return bound.evaluate(x); }};
}

Trajectory simulate_thinning(const ModelSpec& model, const HistoryPolicy& policy, const Envelope& envelope, int x0,
                             const SimConfig& config, std::uint64_t stream) {
  check_config(x0, config);
  RateCache cache(model);
  RandomStream rng(config.seed, stream);
  return run_thinning(cache, model, policy, envelope, x0, config, rng);
}

MonteCarloEstimate MonteCarloEstimate::from_samples(std::span<const double> values) {
  MonteCarloEstimate out;
  out.samples = values.size();
  if (values.empty()) return out;
  const double n = static_cast<double>(values.size());
  out.mean = pairwise_sum(values) / n;
  std::vector<double> squares(values.size());
  std::transform(values.begin(), values.end(), squares.begin(),
                 [mean = out.mean](double v) { return (v - mean) * (v - mean); });
  const double variance = values.size() > 1 ? pairwise_sum(squares) / (n - 1.0) : 0.0;
  out.std_error = std::sqrt(variance / n);
  out.lower = out.mean - 1.959963984540054 * out.std_error;
  out.upper = out.mean + 1.959963984540054 * out.std_error;
  return out;
}

std::vector<MonteCarloEstimate> estimate_survival(const ModelSpec& model, const MarkovControl& control, int x,
                                                  std::span<const double> times, const SimConfig& config) {
  if (!std::is_sorted(times.begin(), times.end())) throw std::invalid_argument("times must be ascending");
  check_config(x, config);
  control.check(model.action_count());
  SimConfig run = config;
  if (!times.empty()) run.horizon = times.back();

  std::vector<RateCache> caches(worker_count(), RateCache(model));
  std::vector<std::vector<double>> alive(times.size(), std::vector<double>(config.samples));
  parallel_for(config.samples, [&](std::size_t i, std::size_t worker) {
    RandomStream rng(config.seed, i);
    const Trajectory traj = run_markov(caches[worker], control, x, run, rng);
    const auto tau = traj.extinction_time();
    for (std::size_t j = 0; j < times.size(); ++j) alive[j][i] = (!tau || *tau > times[j]) ? 1.0 : 0.0;
  });
  std::vector<MonteCarloEstimate> out;
  for (const auto& column : alive) out.push_back(MonteCarloEstimate::from_samples(column));
  return out;
}

ConditionalLawEstimate estimate_conditional_law(const ModelSpec& model, const MarkovControl& control, int x, double t,
                                                const SimConfig& config) {
  check_config(x, config);
  control.check(model.action_count());
  SimConfig run = config;
  run.horizon = t;

  std::vector<RateCache> caches(worker_count(), RateCache(model));
  std::vector<int> final_state(config.samples, 0);
  parallel_for(config.samples, [&](std::size_t i, std::size_t worker) {
    RandomStream rng(config.seed, i);
    const Trajectory traj = run_markov(caches[worker], control, x, run, rng);
    final_state[i] = traj.terminal == TerminalFlag::horizon_reached ? traj.state() : 0;
  });

  ConditionalLawEstimate out;
  const int top = *std::max_element(final_state.begin(), final_state.end());
  out.law.assign(static_cast<std::size_t>(std::max(top, 1)), 0.0);
  for (int s : final_state) {
    if (s > 0) {
      out.law[static_cast<std::size_t>(s - 1)] += 1.0;
      ++out.survivors;
    }
  }
  if (out.survivors == 0) throw SimulationError("no trajectory survived to t = " + std::to_string(t));
  for (double& p : out.law) p /= static_cast<double>(out.survivors);
  out.low_confidence = out.survivors < 100;
  return out;
}

double discounted_duration(double beta, double t1, double t2) {
  if (beta == 0.0) return t2 - t1;
  return std::exp(beta * t1) * std::expm1(beta * (t2 - t1)) / beta;
}

MonteCarloEstimate estimate_cost(const ModelSpec& model, const MarkovControl& control, int x, double beta,
                                 const SimConfig& config) {
  check_config(x, config);
  control.check(model.action_count());
  std::vector<std::string> warnings;
  if (beta > 0.0) {
    const int levels = config.lump_at.value_or(control.levels());
    const auto qsd = solve_qsd(build_generator(model, control.resized(levels), levels));
    if (beta >= qsd.lambda) {
      warnings.push_back("beta = " + std::to_string(beta) + " is not below the extinction rate " +
                         std::to_string(qsd.lambda) + "; the estimator may have infinite mean or variance");
    }
  }

  std::vector<RateCache> caches(worker_count(), RateCache(model));
  const auto values = sample_values(
      config,
      [&](std::size_t i, std::size_t worker) {
        RandomStream rng(config.seed, i);
        return run_markov(caches[worker], control, x, config, rng);
      },
      [&](const Trajectory& traj) {
        return trajectory_cost(traj, beta, [&](int s, std::size_t a) { return model.cost_rate(s, a); });
      });
  auto out = MonteCarloEstimate::from_samples(values);
  out.warnings = std::move(warnings);
  return out;
}

MonteCarloEstimate estimate_cost(const ModelSpec& model, const HistoryPolicy& policy, const Envelope& envelope, int x,
                                 double beta, const SimConfig& config) {
  check_config(x, config);
  std::vector<RateCache> caches(worker_count(), RateCache(model));
  const auto values = sample_values(
      config,
      [&](std::size_t i, std::size_t worker) {
        RandomStream rng(config.seed, i);
        return run_thinning(caches[worker], model, policy, envelope, x, config, rng);
      },
      [&](const Trajectory& traj) {
        return trajectory_cost(traj, beta, [&](int s, std::size_t a) { return model.cost_rate(s, a); });
      });
  return MonteCarloEstimate::from_samples(values);
}

}  // namespace qsdctl
