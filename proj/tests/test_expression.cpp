#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "qsdctl/expression.hpp"

using qsdctl::Expression;
using qsdctl::ExpressionError;

TEST_SUITE("expression") {

TEST_CASE("evaluates the grammar examples") {
  const std::vector<std::string> c{"c"};
  CHECK(Expression::parse("2*n").evaluate(3) == 6.0);
  const std::vector<double> params{1.5};
  CHECK(Expression::parse("n + c*n^2", c).evaluate(2, params) == 8.0);
  CHECK(Expression::parse("max(0, n-1)").evaluate(1) == 0.0);
}

TEST_CASE("precedence and associativity") {
  CHECK(Expression::parse("1 + 2*3").evaluate(0) == 7.0);
  CHECK(Expression::parse("(1 + 2)*3").evaluate(0) == 9.0);
  CHECK(Expression::parse("2^3^2").evaluate(0) == 512.0);
  CHECK(Expression::parse("-2^2").evaluate(0) == -4.0);
  CHECK(Expression::parse("8/2/2").evaluate(0) == 2.0);
  CHECK(Expression::parse("10-3-2").evaluate(0) == 5.0);
  CHECK(Expression::parse("min(3, n, 5)").evaluate(1) == 1.0);
  CHECK(Expression::parse("pow(n, 0.5)").evaluate(9) == 3.0);
  CHECK(Expression::parse("1.5e1").evaluate(0) == 15.0);
}

TEST_CASE("printing reparses to an equal tree") {
  const std::vector<std::string> params{"c", "theta"};
  for (const char* text : {"2*n", "n + c*n^2", "max(0, n-1)", "-(n - theta)/c^2^n", "min(1, 2, pow(n, c))",
                           "--n", "n*(1+theta)*(1-theta)", "0.1 + 1e-3*n"}) {
    const Expression e = Expression::parse(text, params);
    const Expression again = Expression::parse(e.to_string(), params);
    CHECK_MESSAGE(e == again, text);
    CHECK(again.to_string() == e.to_string());
  }
}

TEST_CASE("random trees survive a print round trip") {
  std::mt19937_64 rng(11);
  const std::vector<std::string> params{"c"};
  const std::vector<std::string> atoms{"n", "c", "2", "0.5", "3"};
  const std::vector<std::string> binary{"+", "-", "*", "/", "^"};
  auto pick = [&](std::size_t size) { return std::uniform_int_distribution<std::size_t>(0, size - 1)(rng); };
  std::function<std::string(int)> grow = [&](int depth) -> std::string {
    if (depth == 0 || pick(3) == 0) return atoms[pick(atoms.size())];
    switch (pick(4)) {
      case 0:
        return "-" + grow(depth - 1);
      case 1:
        return "max(" + grow(depth - 1) + ", " + grow(depth - 1) + ")";
      default:
        return "(" + grow(depth - 1) + binary[pick(binary.size())] + grow(depth - 1) + ")";
    }
  };
  for (int i = 0; i < 200; ++i) {
    const std::string text = grow(5);
    const Expression e = Expression::parse(text, params);
    CHECK_MESSAGE(Expression::parse(e.to_string(), params) == e, text);
  }
}

TEST_CASE("evaluation is pure") {
  const std::vector<std::string> c{"c"};
  const Expression e = Expression::parse("c*n^2 + max(n, 3)/7", c);
  const std::vector<double> p{1.25};
  const double first = e.evaluate(17, p);
  for (int i = 0; i < 10; ++i) CHECK(e.evaluate(17, p) == first);
}

TEST_CASE("syntax errors carry the byte offset") {
  try {
    Expression::parse("2*n +* 3");
    FAIL("no error");
  } catch (const ExpressionError& e) {
    CHECK(e.offset() == 5);
  }
  CHECK_THROWS_AS(Expression::parse(""), ExpressionError);
  CHECK_THROWS_AS(Expression::parse("(n"), ExpressionError);
  CHECK_THROWS_AS(Expression::parse("n)"), ExpressionError);
  CHECK_THROWS_AS(Expression::parse("pow(n)"), ExpressionError);
}

TEST_CASE("unknown identifiers are rejected at their position") {
  try {
    Expression::parse("n + d");
    FAIL("no error");
  } catch (const ExpressionError& e) {
    CHECK(e.offset() == 4);
    CHECK(std::string(e.what()).find("d") != std::string::npos);
  }
  CHECK_THROWS_AS(Expression::parse("sqrt(n)"), ExpressionError);
}

TEST_CASE("constant detection") {
  CHECK(Expression::parse("2*3").is_constant());
  CHECK_FALSE(Expression::parse("2*n").is_constant());
  CHECK(Expression::constant(4.5).evaluate(100) == 4.5);
}

}  // TEST_SUITE
