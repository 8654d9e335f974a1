#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace qsdctl {

/// Raised for malformed expression text; `offset` is the byte position of the
/// offending token in the input.
class ExpressionError : public std::runtime_error {
 public:
  ExpressionError(const std::string& what, std::size_t offset)
      : std::runtime_error(what + " at byte " + std::to_string(offset)), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

/// Arithmetic expression over the state variable `n` and named action
/// parameters. Grammar:
///
///   expr    := term (('+' | '-') term)*
///   term    := unary (('*' | '/') unary)*
///   unary   := '-' unary | power
///   power   := primary ('^' unary)?          (right associative)
///   primary := number | name | name '(' expr (',' expr)* ')' | '(' expr ')'
///
/// Functions: min(a, b, ...), max(a, b, ...), pow(a, b).
///
/// Parameters are resolved to indices at parse time, so evaluation is a plain
/// tree walk over doubles.
class Expression {
 public:
  enum class Op { literal, state, parameter, add, sub, mul, div, pow, neg, min, max };

  struct Node {
    Op op = Op::literal;
    double value = 0.0;       // literal
    std::size_t index = 0;    // parameter
    std::string name;         // parameter, for printing
    std::vector<std::shared_ptr<const Node>> args;
  };

  Expression() = default;

  /// Parses `text`. Every identifier other than `n` must appear in
  /// `parameters`; its position there is the index used by evaluate().
  static Expression parse(std::string_view text, std::span<const std::string> parameters = {});

  /// Convenience constant expression.
  static Expression constant(double value);

  double evaluate(double n, std::span<const double> parameters = {}) const;

  /// Fully parenthesized text that parses back to an equal tree.
  std::string to_string() const;

  bool empty() const noexcept { return root_ == nullptr; }
  const Node& root() const { return *root_; }

  /// True when the expression does not reference `n` or any parameter.
  bool is_constant() const;

  friend bool operator==(const Expression& lhs, const Expression& rhs);

 private:
  explicit Expression(std::shared_ptr<const Node> root) : root_(std::move(root)) {}
  std::shared_ptr<const Node> root_;
};

}  // namespace qsdctl
