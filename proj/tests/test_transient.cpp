#include <doctest.h>

#include <cmath>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "qsdctl/transient.hpp"

using namespace qsdctl;

TEST_SUITE("transient") {

TEST_CASE("pure-death survival has the independent-lines closed form") {
  const auto g = build_generator(fixtures::pure_death(1.0, 20), MarkovControl::constant(0, 20), 20);
  for (double t : {0.1, 1.0, 3.0}) {
    const Eigen::VectorXd s = survival_probabilities(g, t);
    for (int x = 1; x <= 20; ++x) {
      const double exact = 1.0 - std::pow(1.0 - std::exp(-t), x);
      CHECK(s(x - 1) == doctest::Approx(exact).epsilon(1e-12));
    }
  }
}

TEST_CASE("uniformization agrees with the dense matrix exponential") {
  const ModelSpec m = fixtures::logistic(30);
  const auto g = build_generator(m, MarkovControl::constant(0, 30), 30);
  const Eigen::MatrixXd q = oracle::dense_generator(m, 0, 30);
  for (double t : {0.25, 1.0, 4.0}) {
    const Eigen::VectorXd ours = survival_probabilities(g, t);
    const Eigen::VectorXd ref = oracle::survival_expm(q, t);
    CHECK(((ours - ref).array() / ref.array()).abs().maxCoeff() < 1e-11);

    Eigen::VectorXd mu = Eigen::VectorXd::Zero(30);
    mu(4) = 0.5;
    mu(9) = 0.5;
    const auto law = propagate_distribution(UniformizedKernel::from(g.restricted()), mu, t);
    const Eigen::VectorXd dense_law = oracle::law_expm(q, mu, t);
    CHECK((law.value() - dense_law).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("zero time is the identity and negative time is refused") {
  const auto g = build_generator(fixtures::t2(), MarkovControl::constant(1, 6), 6);
  const auto kernel = UniformizedKernel::from(g.restricted());
  Eigen::VectorXd mu = Eigen::VectorXd::Zero(6);
  mu(2) = 1.0;
  CHECK(propagate_distribution(kernel, mu, 0.0).value() == mu);
  CHECK_THROWS_AS(propagate_distribution(kernel, mu, -1.0), std::invalid_argument);
  CHECK_THROWS_AS(propagate_distribution(kernel, Eigen::VectorXd::Zero(6), 1.0), std::invalid_argument);
}

TEST_CASE("long horizons stay representable through the log scale") {
  const auto g = build_generator(fixtures::pure_death(1.0, 5), MarkovControl::constant(0, 5), 5);
  const auto s = propagate_function(UniformizedKernel::from(g.restricted()), Eigen::VectorXd::Ones(5), 900.0);
  // P_x(900 < tau) = 1 - (1 - e^{-900})^x = x e^{-900} to double precision,
  // far below the smallest double. The max norm sits at x = 5.
  CHECK(s.log_scale == doctest::Approx(-900.0 + std::log(5.0)).epsilon(1e-12));
  for (int x = 1; x <= 5; ++x) CHECK(s.direction(x - 1) == doctest::Approx(x / 5.0).epsilon(1e-10));
}

TEST_CASE("columns propagate independently and compose in time") {
  const auto g = build_generator(fixtures::logistic(25), MarkovControl::constant(0, 25), 25);
  const auto kernel = UniformizedKernel::from(g.restricted());
  Eigen::MatrixXd start = Eigen::MatrixXd::Zero(25, 2);
  start(0, 0) = 1.0;
  start(7, 1) = 1.0;
  const ScaledColumns both{start, Eigen::VectorXd::Zero(2)};
  const auto once = propagate_distributions(kernel, both, 1.5);
  const auto twice = propagate_distributions(kernel, propagate_distributions(kernel, both, 0.5), 1.0);
  for (Eigen::Index j = 0; j < 2; ++j) {
    const auto single = propagate_distribution(kernel, start.col(j), 1.5);
    CHECK((once.column(j).value() - single.value()).cwiseAbs().maxCoeff() < 1e-14);
    CHECK((twice.column(j).value() - single.value()).cwiseAbs().maxCoeff() < 1e-13);
  }
}

}  // TEST_SUITE
