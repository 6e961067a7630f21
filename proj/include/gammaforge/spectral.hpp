#pragma once

#include <optional>
#include <string>
#include <vector>

#include "gammaforge/transform.hpp"

namespace gammaforge {

/// Interval [left, right] with zero-flux ends, or a circle of length right - left.
struct Domain1D {
  double left = 0.0;
  double right = 1.0;
  bool circle = false;
  int m = 256;
};

/// Finite-volume generator of a 1-D operator L = a u'' + b u' written as
/// (1/rho)(p u')' with p = exp(int b/a) and rho = p/a.
struct Discretization1D {
  Domain1D domain;
  double h = 0.0;
  std::vector<double> nodes;
  /// Generator matrix; rows sum to zero.
  Matrix matrix;
  /// Normalized stationary weights (density times cell volume).
  Vector weights;
  /// D^{1/2} M D^{-1/2} with D = diag(weights); tridiagonal unless periodic.
  Vector sym_diagonal;
  Vector sym_offdiagonal;
  double sym_corner = 0.0;
  double symmetry_residual = 0.0;
  double row_sum_residual = 0.0;
};

Discretization1D discretize_1d(const DiffusionOperator& op, const Domain1D& domain);

/// Eigenvalues of -L in increasing order.
std::vector<double> spectrum(const Discretization1D& d);
/// Smallest nonzero eigenvalue of -L.
double spectral_gap(const Discretization1D& d);

struct LichnerowiczReport {
  double gap = 0.0;
  ExtReal inf_k;
  ExtReal n_prime;
  ExtReal bound;
  double slack = 0.0;
  double tol = 1e-2;
  bool pass = false;
  std::optional<double> n_star;
  std::string message;
};

/// gap(L') >= N'/(N'-1) inf K' where L' = L (K' = K, N' = N) or the transform of L.
LichnerowiczReport lichnerowicz_check(const DiffusionOperator& op, const Expr& K, ExtReal N,
                                      const std::optional<TransformSpec>& spec, std::optional<ExtReal> n_prime,
                                      const Domain1D& domain, double tol = 1e-2);

struct BonnetMyersReport {
  double diameter = 0.0;
  ExtReal bound;
  double k_bound = 0.0;
  double hypothesis_min = 0.0;
  std::optional<double> hypothesis_fail_x;
  double f_max = 0.0;
  bool hypothesis_ok = false;
  bool skipped = false;
  bool pass = false;
  double tol = 1e-3;
  std::string message;
};

/// Intrinsic diameter int a^{-1/2} against (pi/sqrt(K_b)) sqrt(N-1+(N-2)^2/(N*-N)) under
/// f^2 K + (1/2) L f^2 - N* Gamma(f) >= K_b and |f| <= 1 on the grid.
/// Without k_bound the grid infimum of the left side is used.
BonnetMyersReport bonnet_myers_check(const DiffusionOperator& op, const Expr& f, const Expr& K,
                                     std::optional<double> k_bound, ExtReal N, ExtReal n_star,
                                     const Domain1D& domain, double tol = 1e-3);

}  // namespace gammaforge
