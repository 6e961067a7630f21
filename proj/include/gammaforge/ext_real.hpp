#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace gammaforge {

/// Extended real number: a finite value, -inf or +inf. NaN is never stored.
class ExtReal {
 public:
  constexpr ExtReal() = default;
  ExtReal(double v) : v_(v) {  // NOLINT(google-explicit-constructor)
    if (std::isnan(v)) throw std::domain_error("ExtReal: NaN");
  }

  static ExtReal neg_inf() { return ExtReal(-std::numeric_limits<double>::infinity()); }
  static ExtReal pos_inf() { return ExtReal(std::numeric_limits<double>::infinity()); }
  /// Parses "inf", "+inf", "-inf", "infinity" or a decimal literal.
  static ExtReal parse(const std::string& text);

  bool is_finite() const { return std::isfinite(v_); }
  bool is_neg_inf() const { return std::isinf(v_) && v_ < 0; }
  bool is_pos_inf() const { return std::isinf(v_) && v_ > 0; }
  double value() const {
    if (!is_finite()) throw std::domain_error("ExtReal: value() on infinite number");
    return v_;
  }
  double to_double() const { return v_; }
  std::string str() const;

  friend bool operator==(ExtReal a, ExtReal b) { return a.v_ == b.v_; }
  friend auto operator<=>(ExtReal a, ExtReal b) { return a.v_ <=> b.v_; }
  friend ExtReal operator+(ExtReal a, ExtReal b);
  friend ExtReal operator-(ExtReal a) { return ExtReal(-a.v_); }
  friend ExtReal operator-(ExtReal a, ExtReal b) { return a + (-b); }
  friend ExtReal operator*(double s, ExtReal a);

 private:
  double v_ = 0.0;
};

inline ExtReal min(ExtReal a, ExtReal b) { return b < a ? b : a; }
inline ExtReal max(ExtReal a, ExtReal b) { return a < b ? b : a; }

}  // namespace gammaforge
