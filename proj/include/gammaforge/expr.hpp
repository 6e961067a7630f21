#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace gammaforge {

/// Raised by parse() for malformed input; position() is a 0-based offset.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t position);
  std::size_t position() const noexcept { return position_; }

 private:
  std::size_t position_;
};

/// Raised when an expression is evaluated outside its domain of definition
/// (log of a nonpositive number, division by zero, non-finite result, ...).
class DomainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when objects living on charts of different dimension are combined.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class Func { Exp, Log, Sin, Cos, Tan, Cot, Tanh, Sqrt };

struct Node;

/// Immutable symbolic scalar field on a chart of R^n.
///
/// Variables are 1-based (x1..xn) in the textual grammar and in var().
/// Subtrees are shared, so an Expr is a DAG; diff() and Tape both walk it
/// with memoization, which keeps repeated differentiation polynomial in size.
/// Simplification is limited to constant folding and 0/1 identities.
class Expr {
 public:
  enum class Kind { Constant, Variable, Add, Mul, Div, Neg, Pow, Apply, FlatStep };

  Expr();
  Expr(double value);  // NOLINT(google-explicit-constructor)

  static Expr var(int index);
  static Expr apply(Func f, const Expr& arg);
  /// C-infinity function t -> exp(-1/t) for t > 0 and 0 for t <= 0, or its
  /// order-th derivative. Not part of the textual grammar.
  static Expr flat_step(const Expr& arg, int order = 0);

  Kind kind() const;
  bool is_constant() const;
  bool is_zero() const;
  bool is_one() const;
  double constant_value() const;
  int var_index() const;
  Func func() const;
  int order() const;
  double exponent() const;
  const Expr& lhs() const;
  const Expr& rhs() const;

  /// Exact partial derivative with respect to x_index (1-based).
  Expr diff(int index) const;
  double eval(std::span<const double> x) const;
  std::string str() const;
  /// Largest variable index referenced, 0 for constants.
  int max_variable() const;
  std::size_t node_count() const;
  const void* id() const noexcept { return node_.get(); }

 private:
  explicit Expr(std::shared_ptr<const Node> node) : node_(std::move(node)) {}
  std::shared_ptr<const Node> node_;

  friend Expr make_node(Node&&);
  friend class Tape;
  friend class ExprAccess;
};

Expr operator+(const Expr& a, const Expr& b);
Expr operator-(const Expr& a, const Expr& b);
Expr operator*(const Expr& a, const Expr& b);
Expr operator/(const Expr& a, const Expr& b);
Expr operator-(const Expr& a);
Expr pow(const Expr& base, double exponent);
Expr exp(const Expr& e);
Expr log(const Expr& e);
Expr sin(const Expr& e);
Expr cos(const Expr& e);
Expr tan(const Expr& e);
Expr cot(const Expr& e);
Expr tanh(const Expr& e);
Expr sqrt(const Expr& e);
Expr square(const Expr& e);

/// Parse the expression grammar: identifiers x1..xn, decimal/scientific
/// literals, + - * / ^, parentheses and exp, log, sin, cos, tan, cot, tanh,
/// sqrt. Non-smooth functions (abs, max, min, ...) are rejected.
Expr parse(std::string_view text, int dim);

/// Compiled evaluator for a batch of expressions sharing subtrees.
/// Each distinct node is evaluated once per call.
class Tape {
 public:
  Tape() = default;
  explicit Tape(const std::vector<Expr>& outputs);

  std::size_t output_count() const { return outputs_.size(); }
  std::size_t instruction_count() const { return code_.size(); }
  int max_variable() const { return max_var_; }

  void eval(std::span<const double> x, std::span<double> out) const;
  std::vector<double> eval(std::span<const double> x) const;

 private:
  struct Instr {
    Expr::Kind kind;
    int a = -1;
    int b = -1;
    double value = 0.0;
    int index = 0;
    Func func = Func::Exp;
    const Node* node = nullptr;
  };
  std::vector<Instr> code_;
  std::vector<int> outputs_;
  std::vector<Expr> keep_alive_;
  int max_var_ = 0;
};

}  // namespace gammaforge
