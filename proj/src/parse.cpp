#include <cctype>
#include <charconv>
#include <cmath>
#include <string>

#include "gammaforge/expr.hpp"

namespace gammaforge {

namespace {

class Parser {
 public:
  Parser(std::string_view text, int dim) : s_(text), dim_(dim) {}

  Expr run() {
    if (dim_ < 0) throw DimensionError("chart dimension must be >= 0");
    skip();
    if (pos_ == s_.size()) throw ParseError("empty expression", pos_);
    Expr e = expr();
    skip();
    if (pos_ != s_.size()) throw ParseError(std::string("unexpected '") + s_[pos_] + "'", pos_);
    return e;
  }

 private:
  std::string_view s_;
  int dim_;
  std::size_t pos_ = 0;

  void skip() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }

  bool accept(char c) {
    skip();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  Expr expr() {
    Expr lhs = term();
    for (;;) {
      if (accept('+'))
        lhs = lhs + term();
      else if (accept('-'))
        lhs = lhs - term();
      else
        return lhs;
    }
  }

  Expr term() {
    Expr lhs = unary();
    for (;;) {
      if (accept('*'))
        lhs = lhs * unary();
      else if (accept('/'))
        lhs = lhs / unary();
      else
        return lhs;
    }
  }

  Expr unary() {
    if (accept('-')) return -unary();
    if (accept('+')) return unary();
    return power();
  }

  Expr power() {
    Expr base = primary();
    if (accept('^')) {
      Expr ex = unary();
      if (ex.is_constant()) return pow(base, ex.constant_value());
      return exp(ex * log(base));
    }
    return base;
  }

  Expr primary() {
    skip();
    if (pos_ == s_.size()) throw ParseError("unexpected end of input", pos_);
    const char c = s_[pos_];
    if (c == '(') {
      ++pos_;
      Expr e = expr();
      if (!accept(')')) throw ParseError("expected ')'", pos_);
      return e;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return identifier();
    throw ParseError(std::string("unexpected '") + c + "'", pos_);
  }

  Expr number() {
    const std::size_t start = pos_;
    auto digits = [&] {
      std::size_t n = 0;
      while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_, ++n;
      return n;
    };
    std::size_t nd = digits();
    if (pos_ < s_.size() && s_[pos_] == '.') {
      ++pos_;
      nd += digits();
    }
    if (nd == 0) throw ParseError("malformed number", start);
    if (pos_ < s_.size() && (s_[pos_] == 'e' || s_[pos_] == 'E')) {
      ++pos_;
      if (pos_ < s_.size() && (s_[pos_] == '+' || s_[pos_] == '-')) ++pos_;
      if (digits() == 0) throw ParseError("malformed exponent", pos_);
    }
    double v = 0.0;
    auto res = std::from_chars(s_.data() + start, s_.data() + pos_, v);
    if (res.ec != std::errc() || res.ptr != s_.data() + pos_ || !std::isfinite(v))
      throw ParseError("malformed number", start);
    return Expr(v);
  }

  Expr identifier() {
    const std::size_t start = pos_;
    while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_')) ++pos_;
    const std::string name(s_.substr(start, pos_ - start));

    if (name.size() >= 2 && name[0] == 'x' &&
        name.find_first_not_of("0123456789", 1) == std::string::npos) {
      if (name[1] == '0') throw ParseError("variable indices start at 1: '" + name + "'", start);
      int idx = 0;
      auto res = std::from_chars(name.data() + 1, name.data() + name.size(), idx);
      if (res.ec != std::errc()) throw ParseError("variable index too large: '" + name + "'", start);
      if (idx > dim_)
        throw ParseError("variable " + name + " out of range for dimension " + std::to_string(dim_), start);
      return Expr::var(idx);
    }

    static const std::pair<const char*, Func> table[] = {
        {"exp", Func::Exp}, {"log", Func::Log},   {"sin", Func::Sin},   {"cos", Func::Cos},
        {"tan", Func::Tan}, {"cot", Func::Cot},   {"tanh", Func::Tanh}, {"sqrt", Func::Sqrt},
    };
    for (const auto& [fname, f] : table) {
      if (name == fname) {
        if (!accept('(')) throw ParseError("expected '(' after " + name, pos_);
        Expr arg = expr();
        if (!accept(')')) throw ParseError("expected ')'", pos_);
        return Expr::apply(f, arg);
      }
    }
    static const char* nonsmooth[] = {"abs", "max", "min", "sign", "sgn", "floor", "ceil", "heaviside", "step"};
    for (const char* ns : nonsmooth)
      if (name == ns) throw ParseError("non-smooth function '" + name + "' is not supported", start);
    throw ParseError("unknown identifier '" + name + "'", start);
  }
};

}  // namespace

Expr parse(std::string_view text, int dim) { return Parser(text, dim).run(); }

}  // namespace gammaforge
