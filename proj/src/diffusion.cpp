#include "gammaforge/diffusion.hpp"

#include <cmath>

namespace gammaforge {

FunctionJet FunctionJet::linear(const Vector& grad) {
  FunctionJet j;
  j.grad = grad;
  j.hess = Matrix::Zero(grad.size(), grad.size());
  return j;
}

FunctionJet FunctionJet::operator+(const FunctionJet& o) const {
  return FunctionJet{value + o.value, grad + o.grad, hess + o.hess};
}

FunctionJet FunctionJet::operator-(const FunctionJet& o) const {
  return FunctionJet{value - o.value, grad - o.grad, hess - o.hess};
}

FunctionJet FunctionJet::operator*(double s) const { return FunctionJet{value * s, grad * s, hess * s}; }

void require_chart(const DiffusionOperator& op, const Expr& e, const char* what) {
  if (e.max_variable() > op.dim())
    throw DimensionError(std::string(what) + " uses x" + std::to_string(e.max_variable()) +
                         " on a chart of dimension " + std::to_string(op.dim()));
}

CompiledFunction::CompiledFunction(const Expr& f, int n) : f_(f), n_(n) {
  if (f.max_variable() > n)
    throw DimensionError("function uses x" + std::to_string(f.max_variable()) + " on a chart of dimension " +
                         std::to_string(n));
  std::vector<Expr> outs;
  outs.reserve(1 + n + n * n);
  outs.push_back(f);
  std::vector<Expr> d(n);
  for (int i = 0; i < n; ++i) {
    d[i] = f.diff(i + 1);
    outs.push_back(d[i]);
  }
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) outs.push_back(j < i ? Expr(0.0) : d[i].diff(j + 1));
  tape_ = std::make_shared<const Tape>(outs);
}

FunctionJet CompiledFunction::jet(std::span<const double> x) const {
  if (static_cast<int>(x.size()) != n_)
    throw DimensionError("point has dimension " + std::to_string(x.size()) + ", expected " + std::to_string(n_));
  const auto v = tape_->eval(x);
  FunctionJet j;
  j.value = v[0];
  j.grad.resize(n_);
  j.hess.resize(n_, n_);
  for (int i = 0; i < n_; ++i) j.grad(i) = v[1 + i];
  for (int i = 0; i < n_; ++i)
    for (int k = i; k < n_; ++k) j.hess(i, k) = j.hess(k, i) = v[1 + n_ + i * n_ + k];
  return j;
}

double CompiledFunction::value(std::span<const double> x) const { return jet(x).value; }

DiffusionOperator::DiffusionOperator(std::vector<std::vector<Expr>> a, std::vector<Expr> b)
    : n_(static_cast<int>(b.size())), b_(std::move(b)) {
  if (static_cast<int>(a.size()) != n_) throw DimensionError("coefficient matrix and drift sizes differ");
  for (const auto& row : a)
    if (static_cast<int>(row.size()) != n_) throw DimensionError("coefficient matrix is not square");
  a_ = a;
  for (int i = 0; i < n_; ++i) {
    for (int j = i + 1; j < n_; ++j) {
      if (a[i][j].id() == a[j][i].id() || a[i][j].str() == a[j][i].str()) {
        a_[j][i] = a_[i][j];
        continue;
      }
      warnings_.push_back("a(" + std::to_string(i + 1) + "," + std::to_string(j + 1) + ") and a(" +
                          std::to_string(j + 1) + "," + std::to_string(i + 1) +
                          ") differ; using the symmetric part");
      a_[i][j] = a_[j][i] = Expr(0.5) * (a[i][j] + a[j][i]);
    }
  }
  for (int i = 0; i < n_; ++i) {
    for (int j = 0; j < n_; ++j) require_chart(*this, a_[i][j], "coefficient a");
    require_chart(*this, b_[i], "drift b");
  }

  std::vector<Expr> outs;
  std::vector<Expr> aa;
  for (int i = 0; i < n_; ++i)
    for (int j = 0; j < n_; ++j) aa.push_back(a_[i][j]);
  a_tape_ = std::make_shared<const Tape>(aa);
  outs = aa;
  std::vector<std::vector<Expr>> da(n_);  // da[k][ij]
  for (int k = 0; k < n_; ++k)
    for (int ij = 0; ij < n_ * n_; ++ij) {
      const int i = ij / n_, j = ij % n_;
      da[k].push_back(j < i ? Expr(0.0) : aa[ij].diff(k + 1));
      outs.push_back(da[k].back());
    }
  for (int k = 0; k < n_; ++k)
    for (int l = 0; l < n_; ++l)
      for (int ij = 0; ij < n_ * n_; ++ij) {
        const int i = ij / n_, j = ij % n_;
        outs.push_back(j < i || l < k ? Expr(0.0) : da[k][ij].diff(l + 1));
      }
  for (int i = 0; i < n_; ++i) outs.push_back(b_[i]);
  for (int i = 0; i < n_; ++i)
    for (int k = 0; k < n_; ++k) outs.push_back(b_[i].diff(k + 1));
  jet_tape_ = std::make_shared<const Tape>(outs);
}

DiffusionOperator DiffusionOperator::euclidean(int n) {
  std::vector<std::vector<Expr>> a(n, std::vector<Expr>(n, Expr(0.0)));
  for (int i = 0; i < n; ++i) a[i][i] = Expr(1.0);
  return DiffusionOperator(a, std::vector<Expr>(n, Expr(0.0)));
}

DiffusionOperator DiffusionOperator::ornstein_uhlenbeck(int n) {
  std::vector<std::vector<Expr>> a(n, std::vector<Expr>(n, Expr(0.0)));
  std::vector<Expr> b(n);
  for (int i = 0; i < n; ++i) {
    a[i][i] = Expr(1.0);
    b[i] = -Expr::var(i + 1);
  }
  return DiffusionOperator(a, b);
}

DiffusionOperator DiffusionOperator::from_strings(int n, const std::vector<std::vector<std::string>>& a,
                                                  const std::vector<std::string>& b) {
  if (static_cast<int>(a.size()) != n || static_cast<int>(b.size()) != n)
    throw DimensionError("operator document sizes do not match dim = " + std::to_string(n));
  std::vector<std::vector<Expr>> ea(n);
  std::vector<Expr> eb;
  for (int i = 0; i < n; ++i) {
    if (static_cast<int>(a[i].size()) != n) throw DimensionError("row " + std::to_string(i + 1) + " of a has wrong length");
    for (int j = 0; j < n; ++j) ea[i].push_back(parse(a[i][j], n));
    eb.push_back(parse(b[i], n));
  }
  return DiffusionOperator(ea, eb);
}

namespace {

std::string point_str(std::span<const double> x) {
  std::string s = "(";
  for (std::size_t i = 0; i < x.size(); ++i) s += (i ? ", " : "") + std::to_string(x[i]);
  return s + ")";
}

void check_point(int n, std::span<const double> x) {
  if (static_cast<int>(x.size()) != n)
    throw DimensionError("point has dimension " + std::to_string(x.size()) + ", expected " + std::to_string(n));
}

void check_psd(const Matrix& A, std::span<const double> x) {
  double m = 0.0;
  if (!is_psd(A, &m))
    throw DomainError("coefficient matrix is not positive semidefinite at x = " + point_str(x) +
                      " (min eigenvalue " + std::to_string(m) + ")");
}

}  // namespace

Matrix DiffusionOperator::coefficient_matrix(std::span<const double> x) const {
  check_point(n_, x);
  const auto v = a_tape_->eval(x);
  Matrix A(n_, n_);
  for (int i = 0; i < n_; ++i)
    for (int j = 0; j < n_; ++j) A(i, j) = v[i * n_ + j];
  check_psd(A, x);
  return A;
}

OperatorJet DiffusionOperator::jet(std::span<const double> x) const {
  check_point(n_, x);
  const auto v = jet_tape_->eval(x);
  const int n = n_;
  OperatorJet j;
  j.n = n;
  std::size_t p = 0;
  j.A.resize(n, n);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < n; ++k) j.A(i, k) = v[p++];
  j.dA.assign(n, Matrix::Zero(n, n));
  for (int k = 0; k < n; ++k)
    for (int i = 0; i < n; ++i)
      for (int l = 0; l < n; ++l, ++p)
        if (l >= i) j.dA[k](i, l) = j.dA[k](l, i) = v[p];
  j.d2A.assign(n, std::vector<Matrix>(n, Matrix::Zero(n, n)));
  for (int k = 0; k < n; ++k)
    for (int l = 0; l < n; ++l)
      for (int i = 0; i < n; ++i)
        for (int m = 0; m < n; ++m, ++p)
          if (m >= i && l >= k) {
            j.d2A[k][l](i, m) = j.d2A[k][l](m, i) = v[p];
            j.d2A[l][k](i, m) = j.d2A[l][k](m, i) = v[p];
          }
  j.b.resize(n);
  for (int i = 0; i < n; ++i) j.b(i) = v[p++];
  j.db.resize(n, n);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < n; ++k) j.db(i, k) = v[p++];
  check_psd(j.A, x);
  return j;
}

double gamma_at(const OperatorJet& op, const Vector& du, const Vector& dv) { return du.dot(op.A * dv); }

double apply_L_at(const OperatorJet& op, const FunctionJet& u) {
  return (op.A.cwiseProduct(u.hess)).sum() + op.b.dot(u.grad);
}

double gamma2_at(const OperatorJet& op, const FunctionJet& u) {
  const int n = op.n;
  const Vector& g = u.grad;
  const Matrix& U = u.hess;
  const Vector Ag = op.A * g;
  double t1 = 0.0, t2 = 0.0, t4 = 0.0, t5 = 0.0;
  for (int k = 0; k < n; ++k) {
    for (int l = 0; l < n; ++l) t1 += op.A(k, l) * g.dot(op.d2A[k][l] * g);
    t2 += op.A.row(k).dot(U * (op.dA[k] * g));
    t4 += op.b(k) * g.dot(op.dA[k] * g);
    t5 += Ag(k) * op.dA[k].cwiseProduct(U).sum();
  }
  const Matrix AU = op.A * U;
  const double t3 = (AU * AU).trace();
  const double t6 = Ag.dot(op.db.transpose() * g);
  return 0.5 * t1 + 2.0 * t2 + t3 + 0.5 * t4 - t5 - t6;
}

double gamma2_at(const OperatorJet& op, const FunctionJet& u, const FunctionJet& v) {
  return 0.25 * (gamma2_at(op, u + v) - gamma2_at(op, u - v));
}

Matrix hessian_matrix_at(const OperatorJet& op, const FunctionJet& f) {
  const int n = op.n;
  const Vector Ag = op.A * f.grad;
  Matrix P = Matrix::Zero(n, n);
  Matrix R = Matrix::Zero(n, n);
  for (int k = 0; k < n; ++k) {
    P += op.A.row(k).transpose() * (op.dA[k] * f.grad).transpose();
    R += Ag(k) * op.dA[k];
  }
  Matrix M = op.A * f.hess * op.A + 0.5 * (P + P.transpose() - R);
  return sym(M);
}

Expr apply_L(const DiffusionOperator& op, const Expr& u) {
  require_chart(op, u, "function");
  const int n = op.dim();
  std::vector<Expr> du(n);
  for (int i = 0; i < n; ++i) du[i] = u.diff(i + 1);
  Expr r(0.0);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j)
      if (!op.a(i, j).is_zero()) r = r + op.a(i, j) * du[i].diff(j + 1);
    if (!op.b(i).is_zero()) r = r + op.b(i) * du[i];
  }
  return r;
}

Expr gamma(const DiffusionOperator& op, const Expr& u, const Expr& v) {
  return Expr(0.5) * (apply_L(op, u * v) - u * apply_L(op, v) - v * apply_L(op, u));
}

Expr carre_du_champ(const DiffusionOperator& op, const Expr& u, const Expr& v) {
  require_chart(op, u, "function");
  require_chart(op, v, "function");
  const int n = op.dim();
  std::vector<Expr> du(n), dv(n);
  for (int i = 0; i < n; ++i) {
    du[i] = u.diff(i + 1);
    dv[i] = u.id() == v.id() ? du[i] : v.diff(i + 1);
  }
  Expr r(0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (!op.a(i, j).is_zero()) r = r + op.a(i, j) * du[i] * dv[j];
  return r;
}

Expr gamma2(const DiffusionOperator& op, const Expr& u, const Expr& v) {
  const Expr luv = carre_du_champ(op, u, apply_L(op, v));
  const Expr lvu = u.id() == v.id() ? luv : carre_du_champ(op, v, apply_L(op, u));
  return Expr(0.5) * (apply_L(op, carre_du_champ(op, u, v)) - luv - lvu);
}

Expr hessian(const DiffusionOperator& op, const Expr& f, const Expr& g, const Expr& h) {
  const Expr gfh = carre_du_champ(op, f, h);
  const Expr gfg = g.id() == h.id() ? gfh : carre_du_champ(op, f, g);
  return Expr(0.5) * (carre_du_champ(op, g, gfh) + carre_du_champ(op, h, gfg) -
                      carre_du_champ(op, f, carre_du_champ(op, g, h)));
}

Matrix hessian_matrix(const DiffusionOperator& op, const Expr& f, std::span<const double> x) {
  CompiledFunction cf(f, op.dim());
  return hessian_matrix_at(op.jet(x), cf.jet(x));
}

LogChainRule chain_rules_Llog(const DiffusionOperator& op, const Expr& f, double p, const Expr& u) {
  if (p == 0.0) throw std::invalid_argument("chain rule exponent p must be nonzero");
  require_chart(op, f, "function");
  require_chart(op, u, "function");
  const Expr fp = pow(f, p);
  const Expr scale = Expr(1.0 / p) * pow(f, -p);
  const Expr lf = log(f);
  LogChainRule r;
  r.l_lhs = scale * apply_L(op, fp);
  r.l_rhs = apply_L(op, lf) + Expr(p) * carre_du_champ(op, lf, lf);
  r.h_lhs = scale * hessian(op, fp, u, u);
  r.h_rhs = hessian(op, lf, u, u) + Expr(p) * square(carre_du_champ(op, lf, u));
  return r;
}

Expr determinant(const std::vector<std::vector<Expr>>& m) {
  const std::size_t n = m.size();
  if (n == 0) return Expr(1.0);
  if (n == 1) return m[0][0];
  if (n == 2) return m[0][0] * m[1][1] - m[0][1] * m[1][0];
  Expr r(0.0);
  for (std::size_t c = 0; c < n; ++c) {
    if (m[0][c].is_zero()) continue;
    std::vector<std::vector<Expr>> minor;
    for (std::size_t i = 1; i < n; ++i) {
      std::vector<Expr> row;
      for (std::size_t j = 0; j < n; ++j)
        if (j != c) row.push_back(m[i][j]);
      minor.push_back(row);
    }
    const Expr term = m[0][c] * determinant(minor);
    r = c % 2 == 0 ? r + term : r - term;
  }
  return r;
}

DiffusionOperator laplace_beltrami(const RiemannianSpec& spec) {
  const int n = spec.n;
  if (static_cast<int>(spec.g.size()) != n) throw DimensionError("metric has wrong size");
  for (const auto& row : spec.g)
    if (static_cast<int>(row.size()) != n) throw DimensionError("metric is not square");
  std::vector<std::vector<Expr>> g = spec.g;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (g[i][j].id() != g[j][i].id() && g[i][j].str() != g[j][i].str())
        g[i][j] = g[j][i] = Expr(0.5) * (g[i][j] + g[j][i]);
  const Expr det = determinant(g);
  std::vector<std::vector<Expr>> inv(n, std::vector<Expr>(n));
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) {
      // inverse(i,j) = cofactor(j,i) / det
      std::vector<std::vector<Expr>> minor;
      for (int r = 0; r < n; ++r) {
        if (r == j) continue;
        std::vector<Expr> row;
        for (int c = 0; c < n; ++c)
          if (c != i) row.push_back(g[r][c]);
        minor.push_back(row);
      }
      Expr cof = determinant(minor);
      if ((i + j) % 2 == 1) cof = -cof;
      inv[i][j] = inv[j][i] = cof / det;
    }
  const Expr half_dlog = Expr(0.5) / det;
  std::vector<Expr> ddet(n);
  for (int i = 0; i < n; ++i) ddet[i] = det.diff(i + 1);
  std::vector<Expr> b(n, Expr(0.0));
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) b[j] = b[j] + inv[i][j].diff(i + 1) + inv[i][j] * ddet[i] * half_dlog;
  return DiffusionOperator(inv, b);
}

NormalCoordinatesCheck check_normal_coordinates(const DiffusionOperator& op, const std::vector<Expr>& fs,
                                                std::span<const double> x, double tol) {
  const int n = op.dim();
  if (static_cast<int>(fs.size()) != n) throw DimensionError("normal coordinate system needs exactly n functions");
  const OperatorJet oj = op.jet(x);
  std::vector<FunctionJet> jets;
  for (const Expr& f : fs) jets.push_back(CompiledFunction(f, n).jet(x));
  NormalCoordinatesCheck r;
  for (int i = 0; i < n; ++i) {
    const Matrix Mi = hessian_matrix_at(oj, jets[i]);
    r.laplacian_residual = std::max(r.laplacian_residual, std::abs(apply_L_at(oj, jets[i])));
    for (int j = 0; j < n; ++j) {
      const double g = gamma_at(oj, jets[i].grad, jets[j].grad) - (i == j ? 1.0 : 0.0);
      r.gamma_residual = std::max(r.gamma_residual, std::abs(g));
      for (int k = 0; k < n; ++k)
        r.hessian_residual = std::max(r.hessian_residual, std::abs(jets[j].grad.dot(Mi * jets[k].grad)));
    }
  }
  r.max_residual = std::max({r.gamma_residual, r.hessian_residual, r.laplacian_residual});
  r.ok = r.max_residual <= tol;
  return r;
}

std::vector<Expr> normal_coordinates(const DiffusionOperator& op, std::span<const double> x) {
  const int n = op.dim();
  const OperatorJet oj = op.jet(x);
  const Whitening w = whiten(oj.A);
  if (w.rank != n) throw DomainError("normal coordinates need a nondegenerate point");
  const Matrix Ainv = w.pinv;
  std::vector<Expr> dx(n);
  for (int j = 0; j < n; ++j) dx[j] = Expr::var(j + 1) - Expr(x[j]);
  std::vector<Expr> fs;
  for (int i = 0; i < n; ++i) {
    const Vector grad = w.W.row(i).transpose();
    const Matrix C = hessian_matrix_at(oj, FunctionJet::linear(grad));
    const Matrix F = -Ainv * C * Ainv;
    Expr f(0.0);
    for (int j = 0; j < n; ++j) {
      f = f + Expr(grad(j)) * dx[j];
      for (int k = 0; k < n; ++k)
        if (F(j, k) != 0.0) f = f + Expr(0.5 * F(j, k)) * dx[j] * dx[k];
    }
    fs.push_back(f);
  }
  return fs;
}

}  // namespace gammaforge
