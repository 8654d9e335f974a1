#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "qsdctl/model.hpp"

namespace qsdctl {

struct Jump {
  double time = 0.0;
  int state = 0;            // state after the jump
  std::size_t action = 0;   // action in force just before the jump
};

enum class TerminalFlag { absorbed, horizon_reached, state_cap_reached };

std::string_view to_string(TerminalFlag flag);

struct Trajectory {
  int initial_state = 0;
  std::vector<Jump> jumps;
  TerminalFlag terminal = TerminalFlag::absorbed;
  double end_time = 0.0;          // absorption time, horizon, or cap-hit time
  std::size_t final_action = 0;   // action in force after the last jump

  int state() const noexcept { return jumps.empty() ? initial_state : jumps.back().state; }
  int state_at(double t) const;
  int running_max(double t) const;
  std::optional<double> extinction_time() const;
};

struct SimConfig {
  std::uint64_t seed = 1;
  std::optional<double> horizon;   // seconds; none = until absorption
  int state_cap = 1'000'000;
  std::uint64_t samples = 1000;
  std::optional<int> lump_at;      // births overflowing this level land on it, matching the truncated generator
};

/// Independent stream per (seed, trajectory index).
class RandomStream {
 public:
  RandomStream(std::uint64_t seed, std::uint64_t index);

  double uniform();      // [0, 1)
  double exponential(double rate);

 private:
  std::mt19937_64 engine_;
};

class SimulationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Gillespie simulation under a Markov control. Deterministic given
/// (config.seed, stream).
Trajectory simulate_markov(const ModelSpec& model, const MarkovControl& control, int x0, const SimConfig& config,
                           std::uint64_t stream = 0);

/// Deterministic non-anticipative decision rule: sees the current time and
/// the trajectory up to (not including) that time.
struct HistoryPolicy {
  std::string name;
  std::function<std::size_t(double time, const Trajectory& past)> rule;

  static HistoryPolicy from_markov(std::string name, MarkovControl control);
};

/// Dominating rates b_bar * x and d_bar(x) for thinning.
struct Envelope {
  double birth_per_capita = 0.0;
  std::function<double(int)> death;

  /// From the model's declared b_bar and d_bar; throws ModelError if absent.
  static Envelope from_model(const ModelSpec& model);
};

/// Poisson-measure thinning: proposals at rates b_bar x (births) and d_bar_x
/// (deaths), accepted when the uniform mark falls under the actual rate of
/// the policy's action. Throws SimulationError if the actual rate exceeds the
/// envelope.
Trajectory simulate_thinning(const ModelSpec& model, const HistoryPolicy& policy, const Envelope& envelope, int x0,
                             const SimConfig& config, std::uint64_t stream = 0);

struct MonteCarloEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  std::uint64_t samples = 0;
  double lower = 0.0;  // 95% normal interval
  double upper = 0.0;
  std::vector<std::string> warnings;

  static MonteCarloEstimate from_samples(std::span<const double> values);
};

/// P_x(t < tau) at each time (ascending).
std::vector<MonteCarloEstimate> estimate_survival(const ModelSpec& model, const MarkovControl& control, int x,
                                                  std::span<const double> times, const SimConfig& config);

struct ConditionalLawEstimate {
  std::vector<double> law;  // index state - 1
  std::uint64_t survivors = 0;
  bool low_confidence = false;  // fewer than 100 survivors
};

/// Empirical P_x(X_t in . | t < tau). Throws SimulationError with no survivors.
ConditionalLawEstimate estimate_conditional_law(const ModelSpec& model, const MarkovControl& control, int x, double t,
                                                const SimConfig& config);

/// E_x[ int_0^tau e^{beta s} f(X_s, a_s) ds ], accumulated exactly per
/// holding interval. Warns when beta is not below the extinction rate of the
/// control on its truncation level.
MonteCarloEstimate estimate_cost(const ModelSpec& model, const MarkovControl& control, int x, double beta,
                                 const SimConfig& config);

/// Same functional under a history-dependent policy simulated by thinning.
/// The action recorded at each accepted jump is charged for the holding
/// interval that jump ends.
MonteCarloEstimate estimate_cost(const ModelSpec& model, const HistoryPolicy& policy, const Envelope& envelope, int x,
                                 double beta, const SimConfig& config);

/// int_{t1}^{t2} e^{beta s} ds, with the beta = 0 limit.
double discounted_duration(double beta, double t1, double t2);

}  // namespace qsdctl
