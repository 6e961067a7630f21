#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gammaforge/diffusion.hpp"
#include "gammaforge/ext_real.hpp"

namespace gammaforge {

/// Per-point data for a function f. H is the coordinate Hessian matrix,
/// hs2 and trH are its Hilbert-Schmidt norm squared and trace taken
/// against A on the range of A.
struct PointFrame {
  Point x;
  Matrix A;
  int rank = 0;
  Matrix W;
  Matrix pinv;
  FunctionJet f;
  Matrix H;
  double g2 = 0.0;
  double lf = 0.0;
  double gamma = 0.0;
  double hs2 = 0.0;
  double trH = 0.0;

  /// W H W^T: the Hessian in a frame orthonormal for A.
  Matrix whitened_hessian() const { return W * H * W.transpose(); }
};

PointFrame make_frame(const OperatorJet& op, const FunctionJet& f, const Point& x);
PointFrame point_frame(const DiffusionOperator& op, const Expr& f, std::span<const double> x);

/// Throws std::invalid_argument unless N >= 1.
void require_dimension_parameter(ExtReal N);

int dim_gamma(const DiffusionOperator& op, std::span<const double> x);

/// Closed form of the N-Ricci tensor R_N(f)(x).
ExtReal ricci_n(const DiffusionOperator& op, const Expr& f, std::span<const double> x, ExtReal N);
ExtReal ricci_n_at(const PointFrame& frame, ExtReal N);

/// Quadratic form of R_N at x on covectors: R_N(f)(x) = df^T M df where finite.
struct RicciForm {
  Matrix M;
  Matrix A;
  int rank = 0;
  Whitening whitening;
  /// Some direction with Gamma > 0 has R_N = -inf.
  bool minus_infinity = false;
  /// Every direction with Gamma > 0 has R_N = -inf (N < rank).
  bool all_minus_infinity = false;
  /// A covector with R_N = -inf, if any.
  Vector divergent_direction;
  /// c_m = tr_A H_{x^m} - L x^m; at N = rank, R_N(l) = -inf iff c.l != 0.
  Vector trace_defect;
  Vector drift;
  ExtReal N;
};

RicciForm ricci_form_matrix(const DiffusionOperator& op, std::span<const double> x, ExtReal N);
RicciForm ricci_form_at(const OperatorJet& op, ExtReal N);
/// lambda^T M lambda, or -inf in flagged directions.
ExtReal ricci_form_value(const RicciForm& form, const Vector& lambda);
/// inf of R_N(l)/Gamma(l) over covectors with Gamma(l) > 0.
ExtReal min_ricci_ratio(const RicciForm& form);

struct OracleOptions {
  int restarts = 20;
  int max_iterations = 400;
  double gradient_tol = 1e-10;
  double divergence_factor = 1e6;
  std::uint64_t seed = 0x9e3779b97f4a7c15ULL;
};

struct OracleResult {
  ExtReal value;
  bool converged = false;
  bool diverged = false;
  double gradient_norm = 0.0;
  int evaluations = 0;
  double scale = 1.0;
  std::string message;
};

/// Direct minimization of Gamma_2(f~) - (Lf~)^2/N over f~ = f + quadratic
/// perturbation vanishing to first order at x.
OracleResult ricci_infimum_oracle(const DiffusionOperator& op, const Expr& f, std::span<const double> x, ExtReal N,
                                  const OracleOptions& opts = {});

struct Residual {
  double residual = 0.0;
  double scale = 1.0;
  bool ok = false;
  std::string message;
};

Residual verify_sharp_gamma2(const DiffusionOperator& op, const Expr& f, const Expr& g, const Expr& h,
                             std::span<const double> x, ExtReal N, double tol = 1e-8);
Residual verify_bochner_identity(const DiffusionOperator& op, const Expr& f, std::span<const double> x, ExtReal N,
                                 double tol = 1e-8);

/// Residuals of Gamma_2 >= first >= second >= third in the improved BE(K,N) scale.
struct SelfImprovementChain {
  double gamma2 = 0.0;
  double first = 0.0;
  double second = 0.0;
  std::optional<double> third;
  double r01 = 0.0, r12 = 0.0;
  std::optional<double> r23;
  double scale = 1.0;
  bool ok = false;
  std::string message;
};
SelfImprovementChain verify_self_improvement(const DiffusionOperator& op, const Expr& f, std::span<const double> x,
                                             ExtReal N, double K, double tol = 1e-8);

struct BEPoint {
  Point x;
  int rank = 0;
  ExtReal mu;
  double K = 0.0;
  ExtReal residual;
  bool degenerate = false;
  bool pass = false;
};

struct BEReport {
  ExtReal N;
  double tol = 1e-8;
  std::vector<BEPoint> points;
  ExtReal inf_mu = ExtReal::pos_inf();
  ExtReal min_residual = ExtReal::pos_inf();
  bool pass = true;
  std::vector<std::size_t> violations;
  std::vector<std::size_t> degenerate_points;
};

BEReport check_be(const DiffusionOperator& op, const Expr& K, ExtReal N, const std::vector<Point>& grid,
                  double tol = 1e-8);
ExtReal best_k(const DiffusionOperator& op, ExtReal N, const std::vector<Point>& grid);

}  // namespace gammaforge
