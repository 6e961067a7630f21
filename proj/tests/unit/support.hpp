#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "gammaforge/diffusion.hpp"

namespace gammaforge::testing {

using Rng = std::mt19937_64;

inline double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

inline Point random_point(Rng& rng, int n, double r = 1.0) {
  Point x(n);
  for (double& v : x) v = uniform(rng, -r, r);
  return x;
}

// Sum of monomials of total degree <= degree with coefficients in [-scale, scale].
inline Expr random_polynomial(Rng& rng, int n, int degree, double scale = 1.0) {
  Expr out(0.0);
  std::vector<int> e(n, 0);
  while (true) {
    int total = 0;
    for (int v : e) total += v;
    if (total <= degree) {
      Expr m(uniform(rng, -scale, scale));
      for (int i = 0; i < n; ++i)
        if (e[i] > 0) m = m * pow(Expr::var(i + 1), e[i]);
      out = out + m;
    }
    int k = 0;
    while (k < n && ++e[k] > degree) e[k++] = 0;
    if (k == n) break;
  }
  return out;
}

inline double central_difference(const Expr& e, const Point& x, int i, double h = 1e-5) {
  Point p = x, m = x;
  p[i - 1] += h;
  m[i - 1] -= h;
  return (e.eval(p) - e.eval(m)) / (2.0 * h);
}

inline double rel_err(double a, double b) { return std::abs(a - b) / (1.0 + std::abs(a) + std::abs(b)); }

}  // namespace gammaforge::testing
