#include "gammaforge/expr.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <functional>
#include <unordered_map>
#include <unordered_set>

namespace gammaforge {

class ExprAccess {
 public:
  static const Node& node(const Expr& e) { return *e.node_; }
  static Expr null() { return Expr(std::shared_ptr<const Node>()); }
};

struct Node {
  Expr::Kind kind = Expr::Kind::Constant;
  double value = 0.0;  // constant value or Pow exponent
  int index = 0;       // variable index (1-based)
  Func func = Func::Exp;
  int order = 0;  // FlatStep derivative order
  Expr a = ExprAccess::null();
  Expr b = ExprAccess::null();
};

ParseError::ParseError(const std::string& what, std::size_t position)
    : std::runtime_error(what + " at position " + std::to_string(position)), position_(position) {}

Expr make_node(Node&& n) { return Expr(std::make_shared<const Node>(std::move(n))); }

namespace {

bool is_integer(double p) { return std::isfinite(p) && std::floor(p) == p; }

double apply_func(Func f, double x) {
  switch (f) {
    case Func::Exp: return std::exp(x);
    case Func::Log: return std::log(x);
    case Func::Sin: return std::sin(x);
    case Func::Cos: return std::cos(x);
    case Func::Tan: return std::tan(x);
    case Func::Cot: return std::cos(x) / std::sin(x);
    case Func::Tanh: return std::tanh(x);
    case Func::Sqrt: return std::sqrt(x);
  }
  return std::nan("");
}

bool func_domain_ok(Func f, double x) {
  switch (f) {
    case Func::Log: return x > 0.0;
    case Func::Sqrt: return x >= 0.0;
    case Func::Cot: return std::sin(x) != 0.0;
    case Func::Tan: return std::cos(x) != 0.0;
    default: return true;
  }
}

const char* func_name(Func f) {
  switch (f) {
    case Func::Exp: return "exp";
    case Func::Log: return "log";
    case Func::Sin: return "sin";
    case Func::Cos: return "cos";
    case Func::Tan: return "tan";
    case Func::Cot: return "cot";
    case Func::Tanh: return "tanh";
    case Func::Sqrt: return "sqrt";
  }
  return "?";
}

bool pow_domain_ok(double base, double p) {
  if (is_integer(p)) return !(base == 0.0 && p < 0.0);
  return p > 0.0 ? base >= 0.0 : base > 0.0;
}

// Coefficients of p_k with d^k/dt^k exp(-1/t) = exp(-s) p_k(s), s = 1/t.
// p_0 = 1, p_{k+1}(s) = s^2 (p_k(s) - p_k'(s)).
std::vector<double> flat_poly(int order) {
  std::vector<double> p{1.0};
  for (int k = 0; k < order; ++k) {
    std::vector<double> q(p.size() + 2, 0.0);
    for (std::size_t j = 0; j < p.size(); ++j) {
      q[j + 2] += p[j];
      if (j > 0) q[j + 1] -= static_cast<double>(j) * p[j];
    }
    p = std::move(q);
  }
  return p;
}

double flat_step_value(double t, int order) {
  if (t <= 0.0) return 0.0;
  const double s = 1.0 / t;
  const double ls = std::log(s);
  const auto p = flat_poly(order);
  double sum = 0.0;
  for (std::size_t j = 0; j < p.size(); ++j) {
    if (p[j] == 0.0) continue;
    sum += p[j] * std::exp(static_cast<double>(j) * ls - s);
  }
  return sum;
}

std::string format_number(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  std::string s(buf, res.ptr);
  return s;
}

}  // namespace

Expr::Expr() {
  static const std::shared_ptr<const Node> zero = [] {
    Node n;
    n.kind = Kind::Constant;
    return std::make_shared<const Node>(std::move(n));
  }();
  node_ = zero;
}

Expr::Expr(double value) {
  Node n;
  n.kind = Kind::Constant;
  n.value = value;
  node_ = std::make_shared<const Node>(std::move(n));
}

Expr Expr::var(int index) {
  if (index < 1) throw DimensionError("variable index must be >= 1");
  Node n;
  n.kind = Kind::Variable;
  n.index = index;
  return make_node(std::move(n));
}

Expr Expr::apply(Func f, const Expr& arg) {
  if (arg.is_constant() && func_domain_ok(f, arg.constant_value())) {
    const double v = apply_func(f, arg.constant_value());
    if (std::isfinite(v)) return Expr(v);
  }
  Node n;
  n.kind = Kind::Apply;
  n.func = f;
  n.a = arg;
  return make_node(std::move(n));
}

Expr Expr::flat_step(const Expr& arg, int order) {
  if (order < 0) throw std::invalid_argument("flat_step order must be >= 0");
  if (arg.is_constant()) return Expr(flat_step_value(arg.constant_value(), order));
  Node n;
  n.kind = Kind::FlatStep;
  n.order = order;
  n.a = arg;
  return make_node(std::move(n));
}

Expr::Kind Expr::kind() const { return node_->kind; }
bool Expr::is_constant() const { return node_->kind == Kind::Constant; }
bool Expr::is_zero() const { return is_constant() && node_->value == 0.0; }
bool Expr::is_one() const { return is_constant() && node_->value == 1.0; }
double Expr::constant_value() const { return node_->value; }
int Expr::var_index() const { return node_->index; }
Func Expr::func() const { return node_->func; }
int Expr::order() const { return node_->order; }
double Expr::exponent() const { return node_->value; }
const Expr& Expr::lhs() const { return node_->a; }
const Expr& Expr::rhs() const { return node_->b; }

Expr operator+(const Expr& a, const Expr& b) {
  if (a.is_constant() && b.is_constant()) return Expr(a.constant_value() + b.constant_value());
  if (a.is_zero()) return b;
  if (b.is_zero()) return a;
  Node n;
  n.kind = Expr::Kind::Add;
  n.a = a;
  n.b = b;
  return make_node(std::move(n));
}

Expr operator-(const Expr& a) {
  if (a.is_constant()) return Expr(-a.constant_value());
  if (a.kind() == Expr::Kind::Neg) return a.lhs();
  Node n;
  n.kind = Expr::Kind::Neg;
  n.a = a;
  return make_node(std::move(n));
}

Expr operator-(const Expr& a, const Expr& b) {
  if (a.is_constant() && b.is_constant()) return Expr(a.constant_value() - b.constant_value());
  if (b.is_zero()) return a;
  if (a.is_zero()) return -b;
  return a + (-b);
}

Expr operator*(const Expr& a, const Expr& b) {
  if (a.is_constant() && b.is_constant()) return Expr(a.constant_value() * b.constant_value());
  if (a.is_zero() || b.is_zero()) return Expr(0.0);
  if (a.is_one()) return b;
  if (b.is_one()) return a;
  if (a.is_constant() && a.constant_value() == -1.0) return -b;
  if (b.is_constant() && b.constant_value() == -1.0) return -a;
  Node n;
  n.kind = Expr::Kind::Mul;
  n.a = a;
  n.b = b;
  return make_node(std::move(n));
}

Expr operator/(const Expr& a, const Expr& b) {
  if (b.is_one()) return a;
  if (a.is_zero() && !(b.is_zero())) return Expr(0.0);
  if (a.is_constant() && b.is_constant() && b.constant_value() != 0.0)
    return Expr(a.constant_value() / b.constant_value());
  Node n;
  n.kind = Expr::Kind::Div;
  n.a = a;
  n.b = b;
  return make_node(std::move(n));
}

Expr pow(const Expr& base, double exponent) {
  if (exponent == 0.0) return Expr(1.0);
  if (exponent == 1.0) return base;
  if (base.is_constant() && pow_domain_ok(base.constant_value(), exponent)) {
    const double v = std::pow(base.constant_value(), exponent);
    if (std::isfinite(v)) return Expr(v);
  }
  Node n;
  n.kind = Expr::Kind::Pow;
  n.a = base;
  n.value = exponent;
  return make_node(std::move(n));
}

Expr exp(const Expr& e) { return Expr::apply(Func::Exp, e); }
Expr log(const Expr& e) { return Expr::apply(Func::Log, e); }
Expr sin(const Expr& e) { return Expr::apply(Func::Sin, e); }
Expr cos(const Expr& e) { return Expr::apply(Func::Cos, e); }
Expr tan(const Expr& e) { return Expr::apply(Func::Tan, e); }
Expr cot(const Expr& e) { return Expr::apply(Func::Cot, e); }
Expr tanh(const Expr& e) { return Expr::apply(Func::Tanh, e); }
Expr sqrt(const Expr& e) { return Expr::apply(Func::Sqrt, e); }
Expr square(const Expr& e) { return e * e; }

Expr Expr::diff(int index) const {
  if (index < 1) throw DimensionError("differentiation index must be >= 1");
  std::unordered_map<const Node*, Expr> memo;
  std::function<Expr(const Expr&)> d = [&](const Expr& e) -> Expr {
    const Node& n = ExprAccess::node(e);
    if (auto it = memo.find(&n); it != memo.end()) return it->second;
    Expr r;
    switch (n.kind) {
      case Kind::Constant: r = Expr(0.0); break;
      case Kind::Variable: r = Expr(n.index == index ? 1.0 : 0.0); break;
      case Kind::Add: r = d(n.a) + d(n.b); break;
      case Kind::Neg: r = -d(n.a); break;
      case Kind::Mul: r = d(n.a) * n.b + n.a * d(n.b); break;
      case Kind::Div: {
        const Expr da = d(n.a);
        const Expr db = d(n.b);
        r = da / n.b - (n.a * db) / (n.b * n.b);
        break;
      }
      case Kind::Pow: r = Expr(n.value) * pow(n.a, n.value - 1.0) * d(n.a); break;
      case Kind::Apply: {
        const Expr da = d(n.a);
        if (da.is_zero()) {
          r = Expr(0.0);
          break;
        }
        switch (n.func) {
          case Func::Exp: r = e * da; break;
          case Func::Log: r = da / n.a; break;
          case Func::Sin: r = cos(n.a) * da; break;
          case Func::Cos: r = -(sin(n.a) * da); break;
          case Func::Tan: r = (Expr(1.0) + e * e) * da; break;
          case Func::Cot: r = -((Expr(1.0) + e * e) * da); break;
          case Func::Tanh: r = (Expr(1.0) - e * e) * da; break;
          case Func::Sqrt: r = da / (Expr(2.0) * e); break;
        }
        break;
      }
      case Kind::FlatStep: r = flat_step(n.a, n.order + 1) * d(n.a); break;
    }
    memo.emplace(&n, r);
    return r;
  };
  return d(*this);
}

double Expr::eval(std::span<const double> x) const {
  Tape t({*this});
  double out = 0.0;
  t.eval(x, std::span<double>(&out, 1));
  return out;
}

int Expr::max_variable() const {
  int m = 0;
  std::unordered_set<const Node*> seen;
  std::vector<const Node*> stack{node_.get()};
  while (!stack.empty()) {
    const Node* n = stack.back();
    stack.pop_back();
    if (!seen.insert(n).second) continue;
    if (n->kind == Kind::Variable) m = std::max(m, n->index);
    if (n->a.node_) stack.push_back(n->a.node_.get());
    if (n->b.node_) stack.push_back(n->b.node_.get());
  }
  return m;
}

std::size_t Expr::node_count() const {
  std::unordered_set<const Node*> seen;
  std::vector<const Node*> stack{node_.get()};
  while (!stack.empty()) {
    const Node* n = stack.back();
    stack.pop_back();
    if (!seen.insert(n).second) continue;
    if (n->kind == Kind::Constant || n->kind == Kind::Variable) continue;
    stack.push_back(n->a.node_.get());
    if (n->kind == Kind::Add || n->kind == Kind::Mul || n->kind == Kind::Div) stack.push_back(n->b.node_.get());
  }
  return seen.size();
}

namespace {

// Printing precedence: higher binds tighter.
int precedence(const Expr& e) {
  switch (e.kind()) {
    case Expr::Kind::Add: return 1;
    case Expr::Kind::Mul:
    case Expr::Kind::Div: return 2;
    case Expr::Kind::Neg: return 3;
    case Expr::Kind::Pow: return 4;
    case Expr::Kind::Constant: return e.constant_value() < 0.0 ? 3 : 5;
    default: return 5;
  }
}

void print(const Expr& e, std::string& out);

void print_wrapped(const Expr& e, std::string& out, bool wrap) {
  if (wrap) out += '(';
  print(e, out);
  if (wrap) out += ')';
}

void print(const Expr& e, std::string& out) {
  switch (e.kind()) {
    case Expr::Kind::Constant: out += format_number(e.constant_value()); return;
    case Expr::Kind::Variable: out += "x" + std::to_string(e.var_index()); return;
    case Expr::Kind::Add: {
      print_wrapped(e.lhs(), out, precedence(e.lhs()) < 1);
      const Expr& r = e.rhs();
      if (r.kind() == Expr::Kind::Neg) {
        out += " - ";
        print_wrapped(r.lhs(), out, precedence(r.lhs()) <= 1);
      } else if (r.is_constant() && r.constant_value() < 0.0) {
        out += " - " + format_number(-r.constant_value());
      } else {
        out += " + ";
        print_wrapped(r, out, false);
      }
      return;
    }
    case Expr::Kind::Mul:
      print_wrapped(e.lhs(), out, precedence(e.lhs()) < 2);
      out += "*";
      print_wrapped(e.rhs(), out, precedence(e.rhs()) != 2 && precedence(e.rhs()) <= 3);
      return;
    case Expr::Kind::Div:
      print_wrapped(e.lhs(), out, precedence(e.lhs()) < 2);
      out += "/";
      print_wrapped(e.rhs(), out, precedence(e.rhs()) <= 3);
      return;
    case Expr::Kind::Neg:
      out += "-";
      print_wrapped(e.lhs(), out, precedence(e.lhs()) < 2);
      return;
    case Expr::Kind::Pow: {
      print_wrapped(e.lhs(), out, precedence(e.lhs()) < 5);
      out += "^";
      const double p = e.exponent();
      if (p < 0.0)
        out += "(" + format_number(p) + ")";
      else
        out += format_number(p);
      return;
    }
    case Expr::Kind::Apply:
      out += func_name(e.func());
      out += "(";
      print(e.lhs(), out);
      out += ")";
      return;
    case Expr::Kind::FlatStep:
      out += "flat_step" + (e.order() > 0 ? "_d" + std::to_string(e.order()) : std::string()) + "(";
      print(e.lhs(), out);
      out += ")";
      return;
  }
}

}  // namespace

std::string Expr::str() const {
  std::string out;
  print(*this, out);
  return out;
}

// ---------------------------------------------------------------------------
// Tape

Tape::Tape(const std::vector<Expr>& outputs) : keep_alive_(outputs) {
  std::unordered_map<const Node*, int> slot;
  // Iterative post-order so deep derivative chains do not blow the stack.
  for (const Expr& root : outputs) {
    std::vector<std::pair<const Node*, bool>> stack{{root.node_.get(), false}};
    while (!stack.empty()) {
      auto [n, expanded] = stack.back();
      stack.pop_back();
      if (slot.count(n)) continue;
      const bool binary = n->kind == Expr::Kind::Add || n->kind == Expr::Kind::Mul || n->kind == Expr::Kind::Div;
      const bool unary = n->kind == Expr::Kind::Neg || n->kind == Expr::Kind::Pow || n->kind == Expr::Kind::Apply ||
                         n->kind == Expr::Kind::FlatStep;
      if (!expanded) {
        stack.emplace_back(n, true);
        if (binary) stack.emplace_back(n->b.node_.get(), false);
        if (binary || unary) stack.emplace_back(n->a.node_.get(), false);
        continue;
      }
      Instr ins;
      ins.kind = n->kind;
      ins.node = n;
      ins.value = n->kind == Expr::Kind::FlatStep ? static_cast<double>(n->order) : n->value;
      ins.index = n->index;
      ins.func = n->func;
      if (binary || unary) ins.a = slot.at(n->a.node_.get());
      if (binary) ins.b = slot.at(n->b.node_.get());
      if (n->kind == Expr::Kind::Variable) max_var_ = std::max(max_var_, n->index);
      slot.emplace(n, static_cast<int>(code_.size()));
      code_.push_back(ins);
    }
    outputs_.push_back(slot.at(root.node_.get()));
  }
}

void Tape::eval(std::span<const double> x, std::span<double> out) const {
  if (static_cast<int>(x.size()) < max_var_)
    throw DimensionError("point has dimension " + std::to_string(x.size()) + " but expression uses x" +
                         std::to_string(max_var_));
  if (out.size() < outputs_.size()) throw std::invalid_argument("Tape::eval: output span too small");
  std::vector<double> r(code_.size());

  auto fail = [&](const Instr& ins, const std::string& why) {
    std::string pt = "(";
    for (std::size_t i = 0; i < x.size(); ++i) pt += (i ? ", " : "") + format_number(x[i]);
    pt += ")";
    Expr shown = make_node(Node(*ins.node));
    throw DomainError(why + " in '" + shown.str() + "' at x = " + pt);
  };

  for (std::size_t k = 0; k < code_.size(); ++k) {
    const Instr& ins = code_[k];
    double v = 0.0;
    switch (ins.kind) {
      case Expr::Kind::Constant: v = ins.value; break;
      case Expr::Kind::Variable: v = x[ins.index - 1]; break;
      case Expr::Kind::Add: v = r[ins.a] + r[ins.b]; break;
      case Expr::Kind::Mul: v = r[ins.a] * r[ins.b]; break;
      case Expr::Kind::Div:
        if (r[ins.b] == 0.0) fail(ins, "division by zero");
        v = r[ins.a] / r[ins.b];
        break;
      case Expr::Kind::Neg: v = -r[ins.a]; break;
      case Expr::Kind::Pow:
        if (!pow_domain_ok(r[ins.a], ins.value)) fail(ins, "power outside domain");
        v = std::pow(r[ins.a], ins.value);
        break;
      case Expr::Kind::Apply:
        if (!func_domain_ok(ins.func, r[ins.a])) fail(ins, std::string(func_name(ins.func)) + " outside domain");
        v = apply_func(ins.func, r[ins.a]);
        break;
      case Expr::Kind::FlatStep: v = flat_step_value(r[ins.a], static_cast<int>(ins.value)); break;
    }
    if (!std::isfinite(v)) fail(ins, "non-finite value");
    r[k] = v;
  }
  for (std::size_t i = 0; i < outputs_.size(); ++i) out[i] = r[outputs_[i]];
}

std::vector<double> Tape::eval(std::span<const double> x) const {
  std::vector<double> out(outputs_.size());
  eval(x, out);
  return out;
}

}  // namespace gammaforge
