#pragma once

#include <Eigen/Dense>

#include "qsdctl/generator.hpp"

namespace qsdctl {

/// Discrete kernel P = I + Q / rate of a (sub-)generator Q. Only Q / rate is
/// stored and the identity is added at application time: forming 1 - q(x)/rate
/// explicitly would round away the slow rows.
struct UniformizedKernel {
  double rate = 0.0;
  SparseMatrix backward;  // Q / rate; P acts on functions as v + backward v
  SparseMatrix forward;   // (Q / rate)^T, for distributions

  /// rate = factor * max exit rate (or 1 if Q is zero).
  static UniformizedKernel from(const SparseMatrix& q, double factor = 1.01);
};

/// A vector represented as exp(log_scale) * direction, so long horizons never
/// underflow.
struct ScaledVector {
  Eigen::VectorXd direction;
  double log_scale = 0.0;

  Eigen::VectorXd value() const { return direction * std::exp(log_scale); }
};

/// Several vectors propagated together, each column with its own scale.
struct ScaledColumns {
  Eigen::MatrixXd direction;
  Eigen::VectorXd log_scale;

  ScaledVector column(Eigen::Index i) const;
};

/// mu^T exp(Q t), with the result normalized to unit l1 mass. For a
/// sub-generator the survival mass is exp(log_scale).
ScaledVector propagate_distribution(const UniformizedKernel& kernel, const Eigen::VectorXd& mu, double t);

/// exp(Q t) u, normalized to unit max-norm.
ScaledVector propagate_function(const UniformizedKernel& kernel, const Eigen::VectorXd& u, double t);

/// Column-wise versions; the input scales carry over to the result.
ScaledColumns propagate_distributions(const UniformizedKernel& kernel, const ScaledColumns& mu, double t);
ScaledColumns propagate_functions(const UniformizedKernel& kernel, const ScaledColumns& u, double t);

/// Survival probabilities P_x(t < tau) for x = 1..N, computed from the
/// restricted generator.
Eigen::VectorXd survival_probabilities(const TruncatedGenerator& generator, double t);

}  // namespace qsdctl
