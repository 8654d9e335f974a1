#include "qsdctl/expression.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>

namespace qsdctl {

namespace {

using NodePtr = std::shared_ptr<const Expression::Node>;
using Op = Expression::Op;

NodePtr make(Op op, std::vector<NodePtr> args) {
  auto node = std::make_shared<Expression::Node>();
  node->op = op;
  node->args = std::move(args);
  return node;
}

class Parser {
 public:
  Parser(std::string_view text, std::span<const std::string> parameters)
      : text_(text), parameters_(parameters) {}

  NodePtr run() {
    skip_space();
    if (pos_ == text_.size()) throw ExpressionError("empty expression", pos_);
    NodePtr result = expr();
    skip_space();
    if (pos_ != text_.size()) throw ExpressionError("unexpected character '" + std::string(1, text_[pos_]) + "'", pos_);
    return result;
  }

 private:
  void skip_space() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  bool accept(char c) {
    skip_space();
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  void expect(char c) {
    if (!accept(c)) {
      if (pos_ >= text_.size()) throw ExpressionError(std::string("expected '") + c + "' but input ended", pos_);
      throw ExpressionError(std::string("expected '") + c + "'", pos_);
    }
  }

  NodePtr expr() {
    NodePtr lhs = term();
    for (;;) {
      if (accept('+')) {
        lhs = make(Op::add, {lhs, term()});
      } else if (accept('-')) {
        lhs = make(Op::sub, {lhs, term()});
      } else {
        return lhs;
      }
    }
  }

  NodePtr term() {
    NodePtr lhs = unary();
    for (;;) {
      if (accept('*')) {
        lhs = make(Op::mul, {lhs, unary()});
      } else if (accept('/')) {
        lhs = make(Op::div, {lhs, unary()});
      } else {
        return lhs;
      }
    }
  }

  NodePtr unary() {
    if (accept('-')) return make(Op::neg, {unary()});
    return power();
  }

  NodePtr power() {
    NodePtr base = primary();
    if (accept('^')) return make(Op::pow, {base, unary()});
    return base;
  }

  NodePtr primary() {
    skip_space();
    if (pos_ >= text_.size()) throw ExpressionError("unexpected end of expression", pos_);
    const char c = text_[pos_];
    if (c == '(') {
      ++pos_;
      NodePtr inner = expr();
      expect(')');
      return inner;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return identifier();
    throw ExpressionError("unexpected character '" + std::string(1, c) + "'", pos_);
  }

  NodePtr number() {
    const std::size_t start = pos_;
    double value = 0.0;
    auto [end, ec] = std::from_chars(text_.data() + pos_, text_.data() + text_.size(), value);
    if (ec != std::errc()) throw ExpressionError("malformed number", start);
    pos_ = static_cast<std::size_t>(end - text_.data());
    auto node = std::make_shared<Expression::Node>();
    node->op = Op::literal;
    node->value = value;
    return node;
  }

  NodePtr identifier() {
    const std::size_t start = pos_;
    while (pos_ < text_.size() &&
           (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_')) {
      ++pos_;
    }
    const std::string name(text_.substr(start, pos_ - start));

    skip_space();
    if (pos_ < text_.size() && text_[pos_] == '(') {
      Op op;
      if (name == "min") {
        op = Op::min;
      } else if (name == "max") {
        op = Op::max;
      } else if (name == "pow") {
        op = Op::pow;
      } else {
        throw ExpressionError("unknown function '" + name + "'", start);
      }
      ++pos_;
      std::vector<NodePtr> args{expr()};
      while (accept(',')) args.push_back(expr());
      expect(')');
      if (op == Op::pow && args.size() != 2) throw ExpressionError("pow takes exactly two arguments", start);
      if (args.size() < 2) throw ExpressionError(name + " needs at least two arguments", start);
      // min/max fold into a left-leaning binary chain so that printing is unambiguous.
      NodePtr acc = args[0];
      for (std::size_t i = 1; i < args.size(); ++i) acc = make(op, {acc, args[i]});
      return acc;
    }

    auto node = std::make_shared<Expression::Node>();
    if (name == "n") {
      node->op = Op::state;
      return node;
    }
    auto it = std::find(parameters_.begin(), parameters_.end(), name);
    if (it == parameters_.end()) throw ExpressionError("unknown identifier '" + name + "'", start);
    node->op = Op::parameter;
    node->index = static_cast<std::size_t>(it - parameters_.begin());
    node->name = name;
    return node;
  }

  std::string_view text_;
  std::span<const std::string> parameters_;
  std::size_t pos_ = 0;
};

double eval(const Expression::Node& node, double n, std::span<const double> params) {
  switch (node.op) {
    case Op::literal:
      return node.value;
    case Op::state:
      return n;
    case Op::parameter:
      if (node.index >= params.size()) throw std::out_of_range("parameter '" + node.name + "' not bound");
      return params[node.index];
    case Op::neg:
      return -eval(*node.args[0], n, params);
    default:
      break;
  }
  const double a = eval(*node.args[0], n, params);
  const double b = eval(*node.args[1], n, params);
  switch (node.op) {
    case Op::add: return a + b;
    case Op::sub: return a - b;
    case Op::mul: return a * b;
    case Op::div: return a / b;
    case Op::pow: return std::pow(a, b);
    case Op::min: return std::min(a, b);
    case Op::max: return std::max(a, b);
    default: break;
  }
  return 0.0;  // unreachable
}

void print(const Expression::Node& node, std::string& out) {
  auto binary = [&](const char* sym) {
    out += '(';
    print(*node.args[0], out);
    out += sym;
    print(*node.args[1], out);
    out += ')';
  };
  auto call = [&](const char* fn) {
    out += fn;
    out += '(';
    print(*node.args[0], out);
    out += ", ";
    print(*node.args[1], out);
    out += ')';
  };
  switch (node.op) {
    case Op::literal: {
      char buf[64];
      auto [end, ec] = std::to_chars(buf, buf + sizeof buf, node.value);
      out.append(buf, end);
      break;
    }
    case Op::state: out += 'n'; break;
    case Op::parameter: out += node.name; break;
    case Op::neg:
      out += "(-";
      print(*node.args[0], out);
      out += ')';
      break;
    case Op::add: binary(" + "); break;
    case Op::sub: binary(" - "); break;
    case Op::mul: binary(" * "); break;
    case Op::div: binary(" / "); break;
    case Op::pow: binary(" ^ "); break;
    case Op::min: call("min"); break;
    case Op::max: call("max"); break;
  }
}

bool equal(const Expression::Node& a, const Expression::Node& b) {
  if (a.op != b.op || a.args.size() != b.args.size()) return false;
  if (a.op == Op::literal && a.value != b.value) return false;
  if (a.op == Op::parameter && a.index != b.index) return false;
  for (std::size_t i = 0; i < a.args.size(); ++i) {
    if (!equal(*a.args[i], *b.args[i])) return false;
  }
  return true;
}

bool references_variables(const Expression::Node& node) {
  if (node.op == Op::state || node.op == Op::parameter) return true;
  return std::any_of(node.args.begin(), node.args.end(),
                     [](const NodePtr& arg) { return references_variables(*arg); });
}

}  // namespace

Expression Expression::parse(std::string_view text, std::span<const std::string> parameters) {
  return Expression(Parser(text, parameters).run());
}

Expression Expression::constant(double value) {
  auto literal = std::make_shared<Node>();
  literal->op = Op::literal;
  literal->value = std::abs(value);
  if (std::signbit(value)) return Expression(make(Op::neg, {literal}));
  return Expression(literal);
}

double Expression::evaluate(double n, std::span<const double> parameters) const {
  if (!root_) throw std::logic_error("evaluating an empty expression");
  return eval(*root_, n, parameters);
}

std::string Expression::to_string() const {
  std::string out;
  if (root_) print(*root_, out);
  return out;
}

bool Expression::is_constant() const { return root_ && !references_variables(*root_); }

bool operator==(const Expression& lhs, const Expression& rhs) {
  if (!lhs.root_ || !rhs.root_) return lhs.root_ == rhs.root_;
  return equal(*lhs.root_, *rhs.root_);
}

}  // namespace qsdctl
