#include "gammaforge/models.hpp"

#include <stdexcept>

namespace gammaforge {

DiffusionOperator poincare_ball(int n, double R) {
  if (n < 1) throw std::invalid_argument("poincare_ball needs n >= 1");
  if (!(R > 0.0)) throw std::invalid_argument("poincare_ball needs R > 0");
  Expr r2(0.0);
  for (int i = 1; i <= n; ++i) r2 = r2 + square(Expr::var(i));
  const Expr f = Expr(0.5) * (Expr(1.0) - r2 / Expr(R * R));
  const Expr f2 = f * f;
  std::vector<std::vector<Expr>> a(n, std::vector<Expr>(n, Expr(0.0)));
  std::vector<Expr> b(n);
  for (int i = 0; i < n; ++i) {
    a[i][i] = f2;
    // -((n-2)/2) d_i f^2 = -(n-2) f d_i f, with d_i f = -x_i / R^2
    b[i] = Expr((n - 2.0) / (R * R)) * f * Expr::var(i + 1);
  }
  return DiffusionOperator(a, b);
}

DiffusionOperator sphere_radial(int n) {
  if (n < 1) throw std::invalid_argument("sphere_radial needs n >= 1");
  return DiffusionOperator({{Expr(1.0)}}, {Expr(n - 1.0) * cot(Expr::var(1))});
}

DiffusionOperator degenerate_plane() {
  const Expr x1 = Expr::var(1);
  const Expr phi = Expr::flat_step(x1);
  return DiffusionOperator({{phi, Expr(0.0)}, {Expr(0.0), Expr(1.0)}}, {Expr(0.5) * phi.diff(1), Expr(0.0)});
}

}  // namespace gammaforge
