#pragma once

#include "gammaforge/diffusion.hpp"

namespace gammaforge {

/// Laplace-Beltrami operator of the ball of radius R with metric
/// f^{-2} delta, f = (1 - |x|^2/R^2)/2, i.e. f^2 Delta - ((n-2)/2) Gamma(f^2, .).
DiffusionOperator poincare_ball(int n, double R = 1.0);

/// Radial part d^2/dt^2 + (n-1) cot(t) d/dt of the Laplacian on the unit n-sphere.
DiffusionOperator sphere_radial(int n);

/// L = phi(x1) d_11 + phi'(x1)/2 d_1 + d_22 with phi(t) = exp(-1/t) for t > 0, 0 else.
/// The Gamma-dimension is 1 on x1 <= 0 and 2 on x1 > 0.
DiffusionOperator degenerate_plane();

}  // namespace gammaforge
