#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "gammaforge/expr.hpp"
#include "gammaforge/linalg.hpp"

namespace gammaforge {

using Point = std::vector<double>;

/// Coefficients of L and their derivatives at a point.
/// dA[k](i,j) = d_k a^{ij}, d2A[k][l](i,j) = d_k d_l a^{ij}, db(i,k) = d_k b^i.
struct OperatorJet {
  int n = 0;
  Matrix A;
  std::vector<Matrix> dA;
  std::vector<std::vector<Matrix>> d2A;
  Vector b;
  Matrix db;
};

/// Value, gradient and Hessian of a scalar field at a point.
struct FunctionJet {
  double value = 0.0;
  Vector grad;
  Matrix hess;

  static FunctionJet linear(const Vector& grad);
  FunctionJet operator+(const FunctionJet& o) const;
  FunctionJet operator-(const FunctionJet& o) const;
  FunctionJet operator*(double s) const;
};

/// Expr plus a tape for its first and second partial derivatives.
class CompiledFunction {
 public:
  CompiledFunction() = default;
  CompiledFunction(const Expr& f, int n);

  FunctionJet jet(std::span<const double> x) const;
  double value(std::span<const double> x) const;
  const Expr& expr() const { return f_; }
  int dim() const { return n_; }

 private:
  Expr f_;
  int n_ = 0;
  std::shared_ptr<const Tape> tape_;
};

/// L u = sum_ij a^{ij} d_i d_j u + sum_i b^i d_i u on a chart of R^n.
class DiffusionOperator {
 public:
  DiffusionOperator(std::vector<std::vector<Expr>> a, std::vector<Expr> b);

  static DiffusionOperator euclidean(int n);
  /// a = Id, b = -x.
  static DiffusionOperator ornstein_uhlenbeck(int n);
  static DiffusionOperator from_strings(int n, const std::vector<std::vector<std::string>>& a,
                                        const std::vector<std::string>& b);

  int dim() const { return n_; }
  const Expr& a(int i, int j) const { return a_[i][j]; }
  const Expr& b(int i) const { return b_[i]; }
  const std::vector<std::vector<Expr>>& a() const { return a_; }
  const std::vector<Expr>& b() const { return b_; }
  const std::vector<std::string>& warnings() const { return warnings_; }

  /// A(x); throws DomainError if A(x) is not positive semidefinite.
  Matrix coefficient_matrix(std::span<const double> x) const;
  OperatorJet jet(std::span<const double> x) const;

 private:
  int n_;
  std::vector<std::vector<Expr>> a_;
  std::vector<Expr> b_;
  std::vector<std::string> warnings_;
  std::shared_ptr<const Tape> jet_tape_;
  std::shared_ptr<const Tape> a_tape_;
};

struct RiemannianSpec {
  int n = 0;
  std::vector<std::vector<Expr>> g;
};

// Pointwise kernels on jets.
double gamma_at(const OperatorJet& op, const Vector& du, const Vector& dv);
double apply_L_at(const OperatorJet& op, const FunctionJet& u);
double gamma2_at(const OperatorJet& op, const FunctionJet& u);
double gamma2_at(const OperatorJet& op, const FunctionJet& u, const FunctionJet& v);
/// Coordinate matrix M with H_f(g,h)(x) = dg(x)^T M dh(x).
Matrix hessian_matrix_at(const OperatorJet& op, const FunctionJet& f);

// Symbolic operations.
Expr apply_L(const DiffusionOperator& op, const Expr& u);
/// Definition route: (L(uv) - u Lv - v Lu) / 2.
Expr gamma(const DiffusionOperator& op, const Expr& u, const Expr& v);
/// Coordinate route: sum a^{ij} d_i u d_j v.
Expr carre_du_champ(const DiffusionOperator& op, const Expr& u, const Expr& v);
Expr gamma2(const DiffusionOperator& op, const Expr& u, const Expr& v);
Expr hessian(const DiffusionOperator& op, const Expr& f, const Expr& g, const Expr& h);

Matrix hessian_matrix(const DiffusionOperator& op, const Expr& f, std::span<const double> x);

/// Both sides of (1/p) f^-p L f^p = L log f + p Gamma(log f) and
/// (1/p) f^-p H_{f^p}(u,u) = H_{log f}(u,u) + p Gamma(log f, u)^2.
struct LogChainRule {
  Expr l_lhs, l_rhs, h_lhs, h_rhs;
};
LogChainRule chain_rules_Llog(const DiffusionOperator& op, const Expr& f, double p, const Expr& u);

/// Symbolic determinant (cofactor expansion).
Expr determinant(const std::vector<std::vector<Expr>>& m);
DiffusionOperator laplace_beltrami(const RiemannianSpec& spec);

struct NormalCoordinatesCheck {
  bool ok = false;
  double gamma_residual = 0.0;
  double hessian_residual = 0.0;
  double laplacian_residual = 0.0;
  double max_residual = 0.0;
};
NormalCoordinatesCheck check_normal_coordinates(const DiffusionOperator& op, const std::vector<Expr>& fs,
                                                std::span<const double> x, double tol = 1e-8);
/// Quadratic functions f_i with Gamma(f_i,f_j)(x) = delta_ij and
/// H_{f_i}(f_j,f_k)(x) = 0; requires A(x) of full rank.
std::vector<Expr> normal_coordinates(const DiffusionOperator& op, std::span<const double> x);

void require_chart(const DiffusionOperator& op, const Expr& e, const char* what);

}  // namespace gammaforge
