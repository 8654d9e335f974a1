#pragma once

#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "qsdctl/model.hpp"

namespace qsdctl {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// Rate matrix of a Markov-controlled chain on {0..N}. Births that would
/// leave the window are lumped onto state N; at N itself they become
/// self-loops and are dropped from the matrix but kept in `lumped_self_rate`
/// so that off-diagonal mass plus self-loop mass equals b + d in every row.
struct TruncatedGenerator {
  int levels = 0;                   // N
  SparseMatrix rates;               // (N+1) x (N+1), row 0 zero
  Eigen::VectorXd total_rate;       // b^a(x) + d^a(x)
  Eigen::VectorXd lumped_self_rate; // birth mass absorbed into a self-loop

  Eigen::Index size() const noexcept { return rates.rows(); }

  /// Rows and columns 1..N: the sub-generator of the killed chain.
  SparseMatrix restricted() const;

  /// Largest total jump rate, max_x -q(x, x).
  double max_exit_rate() const;
};

TruncatedGenerator build_generator(const ModelSpec& model, const MarkovControl& control, int levels);

/// Generator rows for every constant action plus the cost table, the shared
/// input of policy evaluation and improvement.
struct ActionGenerators {
  int levels = 0;
  std::vector<TruncatedGenerator> per_action;
  Eigen::MatrixXd cost;  // (N+1) x m, row 0 zero

  static ActionGenerators build(const ModelSpec& model, int levels);

  std::size_t action_count() const noexcept { return per_action.size(); }

  /// Generator of the Markov control that picks per_action[control(x)] in row x.
  TruncatedGenerator compose(const MarkovControl& control) const;

  /// f^alpha on {0..N}.
  Eigen::VectorXd cost_of(const MarkovControl& control) const;

  /// sum_y q_a(x -> y) (u(y) - u(x)) + f(x, a), the quantity optimized
  /// pointwise by the HJB equation.
  double hamiltonian(int state, std::size_t action, const Eigen::VectorXd& u) const;
};

/// f^alpha on {0..N}.
Eigen::VectorXd cost_vector(const ModelSpec& model, const MarkovControl& control, int levels);

/// Transpose of a rate matrix: the operator acting on distributions.
SparseMatrix adjoint(const SparseMatrix& rates);
SparseMatrix adjoint(const TruncatedGenerator& generator);

}  // namespace qsdctl
