#include "qsdctl/transient.hpp"

#include <cmath>
#include <stdexcept>

namespace qsdctl {

namespace {

// Poisson mean per sub-step; e^{-mean} stays far above the underflow threshold.
constexpr double max_events_per_step = 256.0;

enum class Norm { l1, max };

Eigen::VectorXd magnitudes(const Eigen::MatrixXd& m, Norm norm) {
  return norm == Norm::l1 ? Eigen::VectorXd(m.cwiseAbs().colwise().sum().transpose())
                          : Eigen::VectorXd(m.cwiseAbs().colwise().maxCoeff().transpose());
}

ScaledColumns propagate(const SparseMatrix& step, double rate, const Eigen::MatrixXd& start, double t, Norm norm) {
  if (t < 0.0) throw std::invalid_argument("negative propagation time");
  ScaledColumns out;
  const Eigen::VectorXd initial = magnitudes(start, norm);
  if (!(initial.array() > 0.0).all()) throw std::invalid_argument("cannot propagate a zero vector");
  out.direction = start * initial.cwiseInverse().asDiagonal();
  out.log_scale = initial.array().log().matrix();
  if (t == 0.0) return out;

  const long steps = std::max(1L, static_cast<long>(std::ceil(rate * t / max_events_per_step)));
  const double h = t / static_cast<double>(steps);
  const double mean = rate * h;

  Eigen::MatrixXd term(start.rows(), start.cols());
  Eigen::MatrixXd next(start.rows(), start.cols());
  Eigen::MatrixXd acc(start.rows(), start.cols());
  for (long s = 0; s < steps; ++s) {
    term = out.direction;
    double weight = std::exp(-mean);
    double cumulative = weight;
    acc = weight * term;
    for (long k = 1;; ++k) {
      next = term;
      next.noalias() += step * term;
      term.swap(next);
      weight *= mean / static_cast<double>(k);
      cumulative += weight;
      acc += weight * term;
      if (static_cast<double>(k) > mean && weight < 1e-18 * cumulative) break;
    }
    const Eigen::VectorXd mass = magnitudes(acc, norm);
    if (!(mass.array() > 0.0).all() || !mass.allFinite()) {
      throw std::runtime_error("surviving mass underflowed during transient propagation");
    }
    out.direction = acc * mass.cwiseInverse().asDiagonal();
    out.log_scale += mass.array().log().matrix();
  }
  return out;
}

ScaledVector first_column(ScaledColumns c) { return {c.direction.col(0), c.log_scale(0)}; }

}  // namespace

UniformizedKernel UniformizedKernel::from(const SparseMatrix& q, double factor) {
  double max_rate = 0.0;
  for (Eigen::Index x = 0; x < q.rows(); ++x) max_rate = std::max(max_rate, -q.coeff(x, x));
  UniformizedKernel kernel;
  kernel.rate = max_rate > 0.0 ? factor * max_rate : 1.0;
  kernel.backward = q / kernel.rate;
  kernel.backward.makeCompressed();
  kernel.forward = SparseMatrix(kernel.backward.transpose());
  return kernel;
}

ScaledVector ScaledColumns::column(Eigen::Index i) const { return {direction.col(i), log_scale(i)}; }

ScaledVector propagate_distribution(const UniformizedKernel& kernel, const Eigen::VectorXd& mu, double t) {
  return first_column(propagate(kernel.forward, kernel.rate, mu, t, Norm::l1));
}

ScaledVector propagate_function(const UniformizedKernel& kernel, const Eigen::VectorXd& u, double t) {
  return first_column(propagate(kernel.backward, kernel.rate, u, t, Norm::max));
}

ScaledColumns propagate_distributions(const UniformizedKernel& kernel, const ScaledColumns& mu, double t) {
  ScaledColumns out = propagate(kernel.forward, kernel.rate, mu.direction, t, Norm::l1);
  out.log_scale += mu.log_scale;
  return out;
}

ScaledColumns propagate_functions(const UniformizedKernel& kernel, const ScaledColumns& u, double t) {
  ScaledColumns out = propagate(kernel.backward, kernel.rate, u.direction, t, Norm::max);
  out.log_scale += u.log_scale;
  return out;
}

Eigen::VectorXd survival_probabilities(const TruncatedGenerator& generator, double t) {
  const auto kernel = UniformizedKernel::from(generator.restricted());
  return propagate_function(kernel, Eigen::VectorXd::Ones(generator.levels), t).value();
}

}  // namespace qsdctl
