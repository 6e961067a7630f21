#include "gammaforge/ext_real.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>

namespace gammaforge {

ExtReal ExtReal::parse(const std::string& text) {
  std::string t;
  for (char c : text)
    if (!std::isspace(static_cast<unsigned char>(c))) t += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (t == "inf" || t == "+inf" || t == "infinity" || t == "+infinity") return pos_inf();
  if (t == "-inf" || t == "-infinity") return neg_inf();
  double v = 0.0;
  auto res = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || res.ec != std::errc() || res.ptr != t.data() + t.size())
    throw std::invalid_argument("not an extended real: '" + text + "'");
  return ExtReal(v);
}

std::string ExtReal::str() const {
  if (is_neg_inf()) return "-inf";
  if (is_pos_inf()) return "inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v_);
  return std::string(buf, res.ptr);
}

ExtReal operator+(ExtReal a, ExtReal b) {
  if ((a.is_neg_inf() && b.is_pos_inf()) || (a.is_pos_inf() && b.is_neg_inf()))
    throw std::domain_error("ExtReal: inf - inf is undefined");
  return ExtReal(a.v_ + b.v_);
}

ExtReal operator*(double s, ExtReal a) {
  if (s == 0.0) return ExtReal(0.0);
  if (std::isnan(s)) throw std::domain_error("ExtReal: NaN scale");
  return ExtReal(s * a.v_);
}

}  // namespace gammaforge
