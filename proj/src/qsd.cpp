#include "qsdctl/qsd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <cstdio>
#include <numeric>

#include <Eigen/SparseLU>

#include "qsdctl/transient.hpp"

namespace qsdctl {

namespace {

constexpr long check_interval = 64;
constexpr double zero_entry = 1e-300;
constexpr double epsilon = std::numeric_limits<double>::epsilon();
constexpr double residual_floor_factor = 4.0;

std::string fmt_g(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

// Every state of 1..N must reach the absorbing state.
void require_absorbing(const TruncatedGenerator& generator) {
  const int n = generator.levels;
  std::vector<char> reaches(static_cast<std::size_t>(n + 1), 0);
  reaches[0] = 1;
  const SparseMatrix reverse = adjoint(generator);
  std::vector<int> frontier{0};
  while (!frontier.empty()) {
    const int y = frontier.back();
    frontier.pop_back();
    for (SparseMatrix::InnerIterator it(reverse, y); it; ++it) {
      const auto x = static_cast<int>(it.col());
      if (x != y && it.value() > 0.0 && !reaches[static_cast<std::size_t>(x)]) {
        reaches[static_cast<std::size_t>(x)] = 1;
        frontier.push_back(x);
      }
    }
  }
  for (int x = 1; x <= n; ++x) {
    if (!reaches[static_cast<std::size_t>(x)]) {
      throw QsdError("state " + std::to_string(x) + " cannot reach 0; the killed chain has no unique QSD");
    }
  }
}

// Inverse iteration with the shift at the converged rate. The factorization
// works on the rates themselves, so slow rows are not swamped by the
// uniformization constant and lambda gains several digits.
void polish(const SparseMatrix& q, const Eigen::VectorXd& killing, QsdSolution& out) {
  const auto n = q.rows();
  Eigen::SparseMatrix<double> shifted = q;
  for (Eigen::Index i = 0; i < n; ++i) shifted.coeffRef(i, i) += out.lambda;
  shifted.makeCompressed();
  Eigen::SparseMatrix<double> shifted_t = shifted.transpose();
  Eigen::SparseLU<Eigen::SparseMatrix<double>> right;
  Eigen::SparseLU<Eigen::SparseMatrix<double>> left;
  right.compute(shifted);
  left.compute(shifted_t);
  if (right.info() != Eigen::Success || left.info() != Eigen::Success) return;
  Eigen::VectorXd pi = out.pi;
  Eigen::VectorXd eta = out.eta;
  for (int step = 0; step < 2; ++step) {
    Eigen::VectorXd next_pi = left.solve(pi);
    Eigen::VectorXd next_eta = right.solve(eta);
    if (left.info() != Eigen::Success || right.info() != Eigen::Success) return;
    if (!next_pi.allFinite() || !next_eta.allFinite()) return;
    next_pi /= next_pi.sum();
    next_eta /= next_pi.dot(next_eta);
    if ((next_pi.array() < 0.0).any() || (next_eta.array() < 0.0).any()) return;
    pi = next_pi;
    eta = next_eta;
  }
  const double lambda = pi.dot(killing);
  if (!(std::abs(lambda - out.lambda) <= 1e-6 * out.lambda)) return;
  out.pi = pi;
  out.eta = eta;
  out.lambda = lambda;
  const SparseMatrix k = adjoint(q);
  out.residual_left = (lambda * pi + k * pi).cwiseAbs().maxCoeff();
  out.residual_right = (q * eta + lambda * eta).cwiseAbs().maxCoeff();
}

}  // namespace

double QsdSolution::mean_of(const Eigen::VectorXd& f) const {
  return pi.dot(f.tail(pi.size()));
}

QsdSolution solve_qsd(const TruncatedGenerator& generator, const QsdOptions& options) {
  if (!(options.tol > 0.0)) throw std::invalid_argument("qsd tolerance must be positive");
  require_absorbing(generator);

  const int n = generator.levels;
  const SparseMatrix q = generator.restricted();
  const SparseMatrix k = adjoint(q);
  const auto kernel = UniformizedKernel::from(q);

  Eigen::VectorXd killing(n);
  for (int x = 1; x <= n; ++x) killing(x - 1) = generator.rates.coeff(x, 0);

  QsdSolution out;
  Eigen::VectorXd pi = Eigen::VectorXd::Constant(n, 1.0 / n);
  Eigen::VectorXd eta = Eigen::VectorXd::Ones(n);
  Eigen::VectorXd scratch(n);
  double previous_lambda = std::numeric_limits<double>::quiet_NaN();

  for (long iter = 1; iter <= options.max_iter; ++iter) {
    scratch = pi;
    scratch.noalias() += kernel.forward * pi;
    pi = scratch / scratch.sum();
    scratch = eta;
    scratch.noalias() += kernel.backward * eta;
    eta = scratch / scratch.maxCoeff();

    if (iter % check_interval != 0 && iter != options.max_iter) continue;

    const double lambda = pi.dot(killing);
    const Eigen::VectorXd scaled_eta = eta / pi.dot(eta);
    const double left = (lambda * pi + k * pi).cwiseAbs().maxCoeff();
    const double right = (q * scaled_eta + lambda * scaled_eta).cwiseAbs().maxCoeff();
    const bool settled =
        std::abs(lambda - previous_lambda) <= std::max(options.tol, 8 * epsilon) * std::abs(lambda);
    // Rounding in q * v leaves a residual of order eps * rate * |v|; the
    // tolerance is never asked to go below it.
    const double left_tol = std::max(options.tol, residual_floor_factor * epsilon * kernel.rate * pi.maxCoeff());
    const double right_tol =
        std::max(options.tol, residual_floor_factor * epsilon * kernel.rate * scaled_eta.cwiseAbs().maxCoeff());
    previous_lambda = lambda;
    out.iterations = iter;
    out.lambda = lambda;
    out.residual_left = left;
    out.residual_right = right;
    if (settled && left <= left_tol && right <= right_tol) {
      out.pi = pi;
      out.eta = scaled_eta;
      break;
    }
  }
  if (out.pi.size() == 0) {
    throw QsdError("power iteration did not converge in " + std::to_string(options.max_iter) +
                   " iterations (residuals " + fmt_g(out.residual_left) + ", " +
                   fmt_g(out.residual_right) + ")");
  }
  if (!(out.lambda > 0.0)) throw QsdError("non-positive extinction rate; the chain is not absorbed");
  polish(q, killing, out);

  // Tiny entries are genuine underflow in the far tail; states the chain can
  // never enter from 1 are a modelling problem worth reporting.
  std::vector<char> seen(static_cast<std::size_t>(n), 0);
  std::vector<int> frontier{0};
  seen[0] = 1;
  while (!frontier.empty()) {
    const int x = frontier.back();
    frontier.pop_back();
    for (SparseMatrix::InnerIterator it(q, x); it; ++it) {
      const auto y = static_cast<int>(it.col());
      if (it.value() > 0.0 && !seen[static_cast<std::size_t>(y)]) {
        seen[static_cast<std::size_t>(y)] = 1;
        frontier.push_back(y);
      }
    }
  }
  int unreachable = 0;
  for (int x = 0; x < n; ++x) {
    if (out.pi(x) < zero_entry) out.pi(x) = 0.0;
    if (!seen[static_cast<std::size_t>(x)]) ++unreachable;
  }
  if (unreachable > 0) {
    out.warnings.push_back(std::to_string(unreachable) + " of " + std::to_string(n) +
                           " states are not reachable from state 1; pi is supported on the reachable part");
  }
  return out;
}

double total_variation(const Eigen::VectorXd& p, const Eigen::VectorXd& q) {
  const Eigen::Index size = std::max(p.size(), q.size());
  double sum = 0.0;
  for (Eigen::Index i = 0; i < size; ++i) {
    const double a = i < p.size() ? p(i) : 0.0;
    const double b = i < q.size() ? q(i) : 0.0;
    sum += std::abs(a - b);
  }
  return 0.5 * sum;
}

std::vector<ConditionalLawStep> conditional_evolution(const TruncatedGenerator& generator, const Eigen::VectorXd& mu0,
                                                      double t, int steps) {
  if (mu0.size() != generator.levels) throw std::invalid_argument("initial law must live on 1..N");
  if ((mu0.array() < 0.0).any() || std::abs(mu0.sum() - 1.0) > 1e-12) {
    throw std::invalid_argument("initial law is not a probability vector");
  }
  if (steps < 1 || t < 0.0) throw std::invalid_argument("conditional evolution needs steps >= 1 and t >= 0");

  const auto kernel = UniformizedKernel::from(generator.restricted());
  std::vector<ConditionalLawStep> out;
  out.push_back({0.0, mu0, 1.0, 0.0});
  ScaledVector state{mu0, 0.0};
  for (int i = 1; i <= steps; ++i) {
    const double dt = t / steps;
    const ScaledVector next = propagate_distribution(kernel, state.direction, dt);
    state.direction = next.direction;
    state.log_scale += next.log_scale;
    const double survival = std::exp(state.log_scale);
    out.push_back({t * i / steps, state.direction, survival, state.log_scale});
  }
  return out;
}

double fitted_decay_rate(std::span<const double> times, std::span<const double> values) {
  double st = 0, sy = 0, stt = 0, sty = 0;
  int count = 0;
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (!(values[i] > 0.0)) continue;
    const double y = std::log(values[i]);
    st += times[i];
    sy += y;
    stt += times[i] * times[i];
    sty += times[i] * y;
    ++count;
  }
  if (count < 2) return std::numeric_limits<double>::quiet_NaN();
  const double slope = (count * sty - st * sy) / (count * stt - st * st);
  return -slope;
}

ConvergenceDiagnostics eta_limit_check(const TruncatedGenerator& generator, const QsdSolution& qsd,
                                       std::span<const double> times, std::vector<int> initial_states) {
  const int n = generator.levels;
  if (qsd.pi.size() != n) throw std::invalid_argument("QSD solved on a different truncation");
  if (initial_states.empty()) {
    for (int x : {1, 2, 5, 10, n}) {
      if (x <= n && std::find(initial_states.begin(), initial_states.end(), x) == initial_states.end()) {
        initial_states.push_back(x);
      }
    }
  }

  if (!std::is_sorted(times.begin(), times.end()) || (!times.empty() && times.front() < 0.0)) {
    throw std::invalid_argument("times must be non-negative and ascending");
  }

  const auto kernel = UniformizedKernel::from(generator.restricted());
  ConvergenceDiagnostics out;
  out.times.assign(times.begin(), times.end());
  out.initial_states = initial_states;

  // e^{(Q + lambda) t} eta = eta, so e^{lambda t} P_.(t < tau) - eta is the
  // propagated 1 - eta; carrying the difference avoids cancellation.
  ScaledColumns excess{Eigen::MatrixXd::Ones(n, 1) - qsd.eta, Eigen::VectorXd::Zero(1)};
  const double excess_norm = excess.direction.cwiseAbs().maxCoeff();
  const auto k = static_cast<Eigen::Index>(initial_states.size());
  ScaledColumns laws{Eigen::MatrixXd::Zero(n, k), Eigen::VectorXd::Zero(k)};
  for (Eigen::Index j = 0; j < k; ++j) laws.direction(initial_states[j] - 1, j) = 1.0;

  std::vector<double> tv_max;
  double now = 0.0;
  for (double t : times) {
    if (excess_norm > 0.0) excess = propagate_functions(kernel, excess, t - now);
    laws = propagate_distributions(kernel, laws, t - now);
    now = t;
    out.eta_deviation.push_back(excess_norm > 0.0 ? std::exp(excess.log_scale(0) + qsd.lambda * t) : 0.0);

    std::vector<double> row;
    for (Eigen::Index j = 0; j < k; ++j) row.push_back(total_variation(laws.direction.col(j), qsd.pi));
    tv_max.push_back(*std::max_element(row.begin(), row.end()));
    out.tv.push_back(std::move(row));
  }
  out.fitted_eta_rate = fitted_decay_rate(out.times, out.eta_deviation);
  out.fitted_tv_rate = fitted_decay_rate(out.times, tv_max);
  return out;
}

LyapunovThreshold lyapunov_threshold(const ModelSpec& model, double lambda, int max_state) {
  const auto& eps = model.constants.epsilon;
  if (!eps || *eps <= 0.0) {
    throw std::invalid_argument("Lyapunov threshold needs a declared epsilon > 0");
  }
  const auto report = validate_hypotheses(model, max_state);
  if (report.at("H2(i)").status != HypothesisStatus::pass) {
    throw std::invalid_argument("Lyapunov threshold needs the superlinear death bound to hold on 1.." +
                                std::to_string(max_state));
  }

  const double power = 1.0 + *eps / 2.0;
  const int k_max = model.progeny.k_max;
  std::vector<double> psi(static_cast<std::size_t>(max_state + k_max + 1), 0.0);
  for (std::size_t y = 1; y < psi.size(); ++y) psi[y] = psi[y - 1] + std::pow(static_cast<double>(y), -power);

  std::vector<double> drift(static_cast<std::size_t>(max_state + 1), 0.0);
  for (int x = 1; x <= max_state; ++x) {
    double worst = -std::numeric_limits<double>::infinity();
    const auto ux = static_cast<std::size_t>(x);
    for (std::size_t a = 0; a < model.action_count(); ++a) {
      const auto p = model.offspring(x, a);
      double up = 0.0;
      for (std::size_t j = 0; j < p.size(); ++j) up += (psi[ux + j + 1] - psi[ux]) * p[j];
      const double value = model.birth_rate(x, a) * up + model.death_rate(x, a) * (psi[ux - 1] - psi[ux]);
      worst = std::max(worst, value);
    }
    drift[ux] = worst + lambda * psi[ux];
  }

  if (drift[static_cast<std::size_t>(max_state)] > 0.0) {
    throw std::runtime_error("no Lyapunov threshold below " + std::to_string(max_state) + " for lambda " +
                             std::to_string(lambda));
  }
  LyapunovThreshold out{max_state, drift[static_cast<std::size_t>(max_state)]};
  for (int x = max_state - 1; x >= 1 && drift[static_cast<std::size_t>(x)] <= 0.0; --x) {
    out.threshold = x;
    out.margin = std::max(out.margin, drift[static_cast<std::size_t>(x)]);
  }
  return out;
}

std::vector<TruncationRow> truncation_sweep(const ModelSpec& model, const MarkovControl& control,
                                            std::span<const int> levels, const QsdOptions& options) {
  if (levels.size() < 2) throw std::invalid_argument("truncation sweep needs at least two levels");
  if (!std::is_sorted(levels.begin(), levels.end()) ||
      std::adjacent_find(levels.begin(), levels.end()) != levels.end()) {
    throw std::invalid_argument("truncation levels must be strictly ascending");
  }
  std::vector<QsdSolution> solutions;
  for (int n : levels) solutions.push_back(solve_qsd(build_generator(model, control.resized(n), n), options));

  const QsdSolution& largest = solutions.back();
  std::vector<TruncationRow> rows;
  for (std::size_t i = 0; i < levels.size(); ++i) {
    rows.push_back({levels[i], solutions[i].lambda, std::abs(solutions[i].lambda - largest.lambda),
                    total_variation(solutions[i].pi, largest.pi)});
  }
  return rows;
}

}  // namespace qsdctl
