#include "qsdctl/generator.hpp"

#include <cmath>
#include <string>

namespace qsdctl {

namespace {

void require_rate(double value, const char* what, int x, const ModelSpec& model, std::size_t action) {
  if (!std::isfinite(value)) {
    throw ModelError(std::string(what) + " is non-finite at state " + std::to_string(x) + ", action '" +
                     model.controls[action].name + "'");
  }
  if (value < 0.0) {
    throw ModelError(std::string(what) + " is negative at state " + std::to_string(x) + ", action '" +
                     model.controls[action].name + "' (" + std::to_string(value) + ")");
  }
}

}  // namespace

SparseMatrix TruncatedGenerator::restricted() const {
  return rates.bottomRightCorner(levels, levels);
}

double TruncatedGenerator::max_exit_rate() const {
  double out = 0.0;
  for (Eigen::Index x = 0; x < rates.rows(); ++x) out = std::max(out, -rates.coeff(x, x));
  return out;
}

TruncatedGenerator build_generator(const ModelSpec& model, const MarkovControl& control, int levels) {
  if (levels < 1) throw std::invalid_argument("truncation level must be >= 1");
  if (control.levels() < levels) {
    throw std::invalid_argument("control defined on 1.." + std::to_string(control.levels()) +
                                " but truncation level is " + std::to_string(levels));
  }
  control.check(model.action_count());

  TruncatedGenerator gen;
  gen.levels = levels;
  gen.total_rate = Eigen::VectorXd::Zero(levels + 1);
  gen.lumped_self_rate = Eigen::VectorXd::Zero(levels + 1);

  std::vector<Eigen::Triplet<double>> triplets;
  Eigen::VectorXd outflow = Eigen::VectorXd::Zero(levels + 1);
  for (int x = 1; x <= levels; ++x) {
    const std::size_t a = control(x);
    const double b = model.birth_rate(x, a);
    const double d = model.death_rate(x, a);
    require_rate(b, "birth rate", x, model, a);
    require_rate(d, "death rate", x, model, a);
    gen.total_rate(x) = b + d;

    if (d > 0.0) {
      triplets.emplace_back(x, x - 1, d);
      outflow(x) += d;
    }
    if (b > 0.0) {
      const auto p = model.offspring(x, a);
      for (std::size_t j = 0; j < p.size(); ++j) {
        const double rate = b * p[j];
        if (rate == 0.0) continue;
        const int target = std::min(x + static_cast<int>(j) + 1, levels);
        if (target == x) {
          gen.lumped_self_rate(x) += rate;
        } else {
          triplets.emplace_back(x, target, rate);
          outflow(x) += rate;
        }
      }
    }
    triplets.emplace_back(x, x, -outflow(x));
  }
  gen.rates.resize(levels + 1, levels + 1);
  gen.rates.setFromTriplets(triplets.begin(), triplets.end());
  gen.rates.makeCompressed();
  return gen;
}

ActionGenerators ActionGenerators::build(const ModelSpec& model, int levels) {
  ActionGenerators out;
  out.levels = levels;
  const std::size_t m = model.action_count();
  out.cost = Eigen::MatrixXd::Zero(levels + 1, static_cast<Eigen::Index>(m));
  for (std::size_t a = 0; a < m; ++a) {
    out.per_action.push_back(build_generator(model, MarkovControl::constant(a, levels), levels));
    for (int x = 1; x <= levels; ++x) {
      const double f = model.cost_rate(x, a);
      if (!std::isfinite(f) || f < 0.0) {
        throw ModelError("cost is negative or non-finite at state " + std::to_string(x) + ", action '" +
                         model.controls[a].name + "'");
      }
      out.cost(x, static_cast<Eigen::Index>(a)) = f;
    }
  }
  return out;
}

TruncatedGenerator ActionGenerators::compose(const MarkovControl& control) const {
  TruncatedGenerator gen;
  gen.levels = levels;
  gen.total_rate = Eigen::VectorXd::Zero(levels + 1);
  gen.lumped_self_rate = Eigen::VectorXd::Zero(levels + 1);
  std::vector<Eigen::Triplet<double>> triplets;
  for (int x = 1; x <= levels; ++x) {
    const std::size_t a = control(x);
    const auto& source = per_action.at(a);
    for (SparseMatrix::InnerIterator it(source.rates, x); it; ++it) triplets.emplace_back(x, it.col(), it.value());
    gen.total_rate(x) = source.total_rate(x);
    gen.lumped_self_rate(x) = source.lumped_self_rate(x);
  }
  gen.rates.resize(levels + 1, levels + 1);
  gen.rates.setFromTriplets(triplets.begin(), triplets.end());
  gen.rates.makeCompressed();
  return gen;
}

Eigen::VectorXd ActionGenerators::cost_of(const MarkovControl& control) const {
  Eigen::VectorXd f = Eigen::VectorXd::Zero(levels + 1);
  for (int x = 1; x <= levels; ++x) f(x) = cost(x, static_cast<Eigen::Index>(control(x)));
  return f;
}

double ActionGenerators::hamiltonian(int state, std::size_t action, const Eigen::VectorXd& u) const {
  const auto& rates = per_action.at(action).rates;
  double drift = 0.0;
  for (SparseMatrix::InnerIterator it(rates, state); it; ++it) {
    if (it.col() != state) drift += it.value() * (u(it.col()) - u(state));
  }
  return drift + cost(state, static_cast<Eigen::Index>(action));
}

Eigen::VectorXd cost_vector(const ModelSpec& model, const MarkovControl& control, int levels) {
  Eigen::VectorXd f = Eigen::VectorXd::Zero(levels + 1);
  for (int x = 1; x <= levels; ++x) f(x) = model.cost_rate(x, control(x));
  return f;
}

SparseMatrix adjoint(const SparseMatrix& rates) { return SparseMatrix(rates.transpose()); }

SparseMatrix adjoint(const TruncatedGenerator& generator) { return adjoint(generator.rates); }

}  // namespace qsdctl
