#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qsdctl/generator.hpp"

namespace qsdctl {

class QsdError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Quasi-stationary triple of a truncated chain. Vectors are indexed by
/// state - 1 (entry 0 is state 1).
struct QsdSolution {
  Eigen::VectorXd pi;          // sums to one
  double lambda = 0.0;         // extinction rate, per second
  Eigen::VectorXd eta;         // L eta = -lambda eta, pi . eta = 1
  double residual_left = 0.0;  // |lambda pi + K pi|_inf
  double residual_right = 0.0; // |L eta + lambda eta|_inf
  long iterations = 0;
  std::vector<std::string> warnings;

  /// pi(f) for a cost vector on {0..N}.
  double mean_of(const Eigen::VectorXd& f_on_0_to_n) const;
};

struct QsdOptions {
  double tol = 1e-11;
  long max_iter = 20'000'000;
};

/// Perron pair of the killed chain by power iteration on the uniformized
/// kernel P = I + Q|_{1..N} / (1.01 max rate). pi comes from left
/// iteration, eta from right iteration; lambda is read off as the killing
/// flux pi(q(., 0)).
QsdSolution solve_qsd(const TruncatedGenerator& generator, const QsdOptions& options = {});

/// 1/2 sum |p - q|, zero-padding the shorter vector.
double total_variation(const Eigen::VectorXd& p, const Eigen::VectorXd& q);

struct ConditionalLawStep {
  double time = 0.0;
  Eigen::VectorXd law;     // conditional distribution on 1..N
  double survival = 1.0;   // P_mu0(time < tau)
  double log_survival = 0.0;
};

/// Conditional laws P_mu0(X_s in . | s < tau) at s = i t / steps, i = 0..steps.
std::vector<ConditionalLawStep> conditional_evolution(const TruncatedGenerator& generator, const Eigen::VectorXd& mu0,
                                                      double t, int steps);

struct ConvergenceDiagnostics {
  std::vector<double> times;
  std::vector<int> initial_states;
  std::vector<std::vector<double>> tv;    // [time][initial state]
  std::vector<double> eta_deviation;      // sup_x |e^{lambda t} P_x(t < tau) - eta(x)|
  double fitted_eta_rate = 0.0;           // least-squares decay rate of eta_deviation
  double fitted_tv_rate = 0.0;            // same for max_x tv
};

/// e^{lambda t} P_x(t < tau) against eta, and TV distance of the conditional
/// law from delta_x to pi, on the given time grid. `initial_states` defaults
/// to {1, 2, 5, 10, N} clipped to the window.
ConvergenceDiagnostics eta_limit_check(const TruncatedGenerator& generator, const QsdSolution& qsd,
                                       std::span<const double> times, std::vector<int> initial_states = {});

/// Slope of the least-squares line through (t, log y) for positive y, negated.
double fitted_decay_rate(std::span<const double> times, std::span<const double> values);

struct LyapunovThreshold {
  int threshold = 0;  // x_lambda
  double margin = 0.0; // max over [threshold, max_state] of max_a L^a psi + lambda psi (<= 0)
};

/// psi(x) = sum_{y <= x} y^{-(1 + epsilon/2)}; finds the smallest x such
/// that max_a L^a psi(y) + lambda psi(y) <= 0 for every y in [x, max_state],
/// using the untruncated generator.
LyapunovThreshold lyapunov_threshold(const ModelSpec& model, double lambda, int max_state);

struct TruncationRow {
  int levels = 0;
  double lambda = 0.0;
  double lambda_difference = 0.0;  // |lambda_N - lambda_Nmax|
  double tv_to_largest = 0.0;
};

/// QSD at each truncation level under `control` (restricted or extended as
/// needed), compared with the largest level.
std::vector<TruncationRow> truncation_sweep(const ModelSpec& model, const MarkovControl& control,
                                            std::span<const int> levels, const QsdOptions& options = {});

}  // namespace qsdctl
