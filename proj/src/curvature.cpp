#include "gammaforge/curvature.hpp"

#include <cmath>
#include <limits>
#include <random>

#include "gammaforge/parallel.hpp"

namespace gammaforge {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

bool trace_matches(double trH, double lf) { return std::abs(trH - lf) <= 1e-8 * (1.0 + std::abs(lf)); }

}  // namespace

void require_dimension_parameter(ExtReal N) {
  if (N < ExtReal(1.0)) throw std::invalid_argument("dimension parameter N must be >= 1, got " + N.str());
}

PointFrame make_frame(const OperatorJet& op, const FunctionJet& f, const Point& x) {
  PointFrame fr;
  fr.x = x;
  fr.A = op.A;
  const Whitening w = whiten(op.A);
  fr.rank = w.rank;
  fr.W = w.W;
  fr.pinv = w.pinv;
  fr.f = f;
  fr.H = hessian_matrix_at(op, f);
  fr.g2 = gamma2_at(op, f);
  fr.lf = apply_L_at(op, f);
  fr.gamma = gamma_at(op, f.grad, f.grad);
  const Matrix Hw = fr.whitened_hessian();
  fr.hs2 = Hw.squaredNorm();
  fr.trH = Hw.trace();
  return fr;
}

PointFrame point_frame(const DiffusionOperator& op, const Expr& f, std::span<const double> x) {
  CompiledFunction cf(f, op.dim());
  return make_frame(op.jet(x), cf.jet(x), Point(x.begin(), x.end()));
}

int dim_gamma(const DiffusionOperator& op, std::span<const double> x) {
  return whiten(op.coefficient_matrix(x)).rank;
}

ExtReal ricci_n_at(const PointFrame& fr, ExtReal N) {
  require_dimension_parameter(N);
  const double base = fr.g2 - fr.hs2;
  if (N.is_pos_inf()) return base;
  const double n = fr.rank;
  const double Nv = N.value();
  if (Nv < n) return ExtReal::neg_inf();
  const double d = fr.trH - fr.lf;
  if (Nv == n) return trace_matches(fr.trH, fr.lf) ? ExtReal(base) : ExtReal::neg_inf();
  return base - d * d / (Nv - n);
}

ExtReal ricci_n(const DiffusionOperator& op, const Expr& f, std::span<const double> x, ExtReal N) {
  require_dimension_parameter(N);
  return ricci_n_at(point_frame(op, f, x), N);
}

RicciForm ricci_form_at(const OperatorJet& op, ExtReal N) {
  require_dimension_parameter(N);
  const int n = op.n;
  RicciForm rf;
  rf.N = N;
  rf.A = op.A;
  rf.whitening = whiten(op.A);
  rf.rank = rf.whitening.rank;
  rf.drift = op.b;
  const Matrix& P = rf.whitening.pinv;

  std::vector<FunctionJet> e(n);
  std::vector<Matrix> H(n);
  for (int m = 0; m < n; ++m) {
    e[m] = FunctionJet::linear(Vector::Unit(n, m));
    H[m] = hessian_matrix_at(op, e[m]);
  }
  Matrix G(n, n), Q(n, n);
  Vector t(n);
  for (int i = 0; i < n; ++i) {
    t(i) = (P * H[i]).trace();
    for (int j = i; j < n; ++j) {
      G(i, j) = G(j, i) = i == j ? gamma2_at(op, e[i]) : gamma2_at(op, e[i], e[j]);
      Q(i, j) = Q(j, i) = (P * H[i] * P * H[j]).trace();
    }
  }
  rf.trace_defect = t - op.b;
  rf.M = G - Q;
  if (N.is_pos_inf()) return rf;

  const double Nv = N.value();
  if (Nv < rf.rank) {
    rf.all_minus_infinity = rf.minus_infinity = rf.rank > 0;
    if (rf.rank > 0) rf.divergent_direction = rf.whitening.W.row(0).transpose();
    return rf;
  }
  if (Nv == rf.rank) {
    const Vector wc = rf.whitening.W * rf.trace_defect;
    const Vector wb = rf.whitening.W * op.b;
    if (wc.norm() > 1e-8 * (1.0 + wb.norm())) {
      rf.minus_infinity = true;
      rf.divergent_direction = rf.whitening.W.transpose() * wc;
    }
    return rf;
  }
  rf.M -= rf.trace_defect * rf.trace_defect.transpose() / (Nv - rf.rank);
  return rf;
}

RicciForm ricci_form_matrix(const DiffusionOperator& op, std::span<const double> x, ExtReal N) {
  return ricci_form_at(op.jet(x), N);
}

ExtReal ricci_form_value(const RicciForm& form, const Vector& lambda) {
  const double g = lambda.dot(form.A * lambda);
  const bool visible = g > 1e-12 * (1.0 + lambda.squaredNorm());
  if (form.all_minus_infinity && visible) return ExtReal::neg_inf();
  if (form.minus_infinity && !form.all_minus_infinity) {
    const double c = form.trace_defect.dot(lambda);
    const double lf = form.drift.dot(lambda);
    if (!trace_matches(c + lf, lf)) return ExtReal::neg_inf();
  }
  return lambda.dot(form.M * lambda);
}

ExtReal min_ricci_ratio(const RicciForm& form) {
  if (form.rank == 0) return ExtReal::pos_inf();
  if (form.minus_infinity) return ExtReal::neg_inf();
  return min_generalized_eigenvalue(form.M, form.whitening);
}

// ---------------------------------------------------------------------------
// Oracle

namespace {

struct QuadraticObjective {
  const OperatorJet& op;
  const FunctionJet& f;
  double inv_n;  // 1/N, 0 for N = inf
  int n;
  mutable int evaluations = 0;

  Matrix unpack(const Vector& p) const {
    Matrix psi(n, n);
    int k = 0;
    for (int i = 0; i < n; ++i)
      for (int j = i; j < n; ++j) psi(i, j) = psi(j, i) = p(k++);
    return psi;
  }

  Vector pack(const Matrix& psi) const {
    Vector p(n * (n + 1) / 2);
    int k = 0;
    for (int i = 0; i < n; ++i)
      for (int j = i; j < n; ++j) p(k++) = psi(i, j);
    return p;
  }

  double operator()(const Vector& p) const {
    ++evaluations;
    FunctionJet ft = f;
    ft.hess += unpack(p);
    const double l = apply_L_at(op, ft);
    return gamma2_at(op, ft) - inv_n * l * l;
  }

  Vector gradient(const Vector& p, double h) const {
    Vector g(p.size());
    Vector q = p;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      q(i) = p(i) + h;
      const double fp = (*this)(q);
      q(i) = p(i) - h;
      const double fm = (*this)(q);
      q(i) = p(i);
      g(i) = (fp - fm) / (2.0 * h);
    }
    return g;
  }
};

struct DescentOutcome {
  double value = kInf;
  double gradient_norm = 0.0;
  bool converged = false;
  bool diverged = false;
};

// Nonlinear conjugate gradient (Polak-Ribiere+) with a three-point parabolic
// line search. Nonpositive curvature along a descent direction is followed
// with growing steps until the value drops below the divergence floor.
DescentOutcome descend(const QuadraticObjective& obj, Vector p, const OracleOptions& opts, double scale) {
  DescentOutcome out;
  const double floor = -opts.divergence_factor * scale;
  const double fd_step = 1e-3;
  double fx = obj(p);
  Vector g = obj.gradient(p, fd_step);
  Vector d = -g;
  for (int it = 0; it < opts.max_iterations; ++it) {
    out.gradient_norm = g.norm();
    if (out.gradient_norm <= opts.gradient_tol * scale) {
      out.converged = true;
      break;
    }
    if (g.dot(d) >= 0) d = -g;
    const double t = 1.0 / d.norm();
    const double fp = obj(p + t * d);
    const double fm = obj(p - t * d);
    const double curv = (fp + fm - 2.0 * fx) / (t * t);
    const double slope = (fp - fm) / (2.0 * t);
    if (curv <= 1e-12 * scale) {
      if (curv >= -1e-10 * scale && std::abs(slope) * t <= 1e-8 * scale) break;
      double step = t;
      for (int k = 0; k < 80; ++k) {
        step *= 10.0;
        const double v = obj(p + step * d);
        if (v < floor) {
          out.diverged = true;
          out.value = -kInf;
          return out;
        }
      }
      break;
    }
    const double alpha = -slope / curv;
    const Vector pn = p + alpha * d;
    const double fn = obj(pn);
    if (fn < floor) {
      out.diverged = true;
      out.value = -kInf;
      return out;
    }
    if (fn > fx + 1e-14 * scale) {
      d = -g;
      if (it > 0 && out.gradient_norm < 1e-6 * scale) break;
      continue;
    }
    const Vector gn = obj.gradient(pn, fd_step);
    const double beta = std::max(0.0, gn.dot(gn - g) / std::max(g.squaredNorm(), 1e-300));
    d = -gn + beta * d;
    p = pn;
    fx = fn;
    g = gn;
  }
  out.value = fx;
  out.gradient_norm = g.norm();
  out.converged = out.converged || out.gradient_norm <= opts.gradient_tol * scale * 100.0;
  return out;
}

}  // namespace

OracleResult ricci_infimum_oracle(const DiffusionOperator& op, const Expr& f, std::span<const double> x, ExtReal N,
                                  const OracleOptions& opts) {
  require_dimension_parameter(N);
  const int n = op.dim();
  const OperatorJet oj = op.jet(x);
  const FunctionJet fj = CompiledFunction(f, n).jet(x);
  const PointFrame fr = make_frame(oj, fj, Point(x.begin(), x.end()));

  OracleResult res;
  if (fr.rank < n) {
    res.value = ricci_n_at(fr, N);
    res.message = "degenerate point (rank " + std::to_string(fr.rank) + " < " + std::to_string(n) +
                  "); returned the closed form";
    return res;
  }
  const double inv_n = N.is_pos_inf() ? 0.0 : 1.0 / N.value();
  QuadraticObjective obj{oj, fj, inv_n, n};
  res.scale = 1.0 + std::abs(fr.g2) + fr.lf * fr.lf + fr.hs2;
  const double floor = -opts.divergence_factor * res.scale;

  // Stationary point of the frame objective 2 tr(psi H) + |psi|^2 - (Lf + tr psi)^2 / N.
  const Matrix Hw = fr.whitened_hessian();
  Matrix psi_frame = -Hw;
  if (!N.is_pos_inf() && N.value() > n)
    psi_frame -= Matrix::Identity(n, n) * ((fr.trH - fr.lf) / (N.value() - n));
  const Matrix start = fr.W.transpose() * psi_frame * fr.W;

  // Escalating family psi_k = start + k A^{-1}; the value is quadratic in k.
  const double v0 = obj(obj.pack(start));
  const double vp = obj(obj.pack(start + fr.pinv));
  const double vm = obj(obj.pack(start - fr.pinv));
  const double c2 = 0.5 * (vp + vm) - v0;
  const double c1 = 0.5 * (vp - vm);
  const bool bent_down = c2 < -1e-10 * n;
  const bool tilted = std::abs(c2) <= 1e-10 * n && std::abs(c1) > 2e-8 * (1.0 + std::abs(fr.lf));
  if (bent_down || tilted) {
    for (int j = 0; j <= 12; ++j) {
      const double k = std::pow(10.0, j);
      const double v = v0 + (bent_down ? c2 * k * k + std::abs(c1) * k : -std::abs(c1) * k);
      if (v < floor) {
        res.value = ExtReal::neg_inf();
        res.diverged = true;
        res.evaluations = obj.evaluations;
        res.message = "value below divergence floor along the escalating family";
        return res;
      }
    }
  }

  std::mt19937_64 rng(opts.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double spread = 1.0 + start.cwiseAbs().maxCoeff();
  double best = kInf;
  double best_grad = 0.0;
  bool converged = false;
  for (int r = 0; r <= opts.restarts; ++r) {
    Vector p0 = obj.pack(start);
    if (r > 0)
      for (Eigen::Index i = 0; i < p0.size(); ++i) p0(i) += spread * normal(rng);
    const DescentOutcome o = descend(obj, p0, opts, res.scale);
    if (o.diverged) {
      res.value = ExtReal::neg_inf();
      res.diverged = true;
      res.evaluations = obj.evaluations;
      res.message = "descent diverged below the floor";
      return res;
    }
    if (o.value < best) {
      best = o.value;
      best_grad = o.gradient_norm;
      converged = o.converged;
    }
  }
  res.value = best;
  res.gradient_norm = best_grad;
  res.converged = converged;
  res.evaluations = obj.evaluations;
  if (!converged) res.message = "not converged; best value reported";
  return res;
}

// ---------------------------------------------------------------------------
// Inequality checks

Residual verify_sharp_gamma2(const DiffusionOperator& op, const Expr& f, const Expr& g, const Expr& h,
                             std::span<const double> x, ExtReal N, double tol) {
  require_dimension_parameter(N);
  const int n = op.dim();
  const OperatorJet oj = op.jet(x);
  const FunctionJet fj = CompiledFunction(f, n).jet(x);
  const FunctionJet gj = CompiledFunction(g, n).jet(x);
  const FunctionJet hj = CompiledFunction(h, n).jet(x);
  const PointFrame fr = make_frame(oj, fj, Point(x.begin(), x.end()));
  const ExtReal rn = ricci_n_at(fr, N);
  const double inv_n = N.is_pos_inf() ? 0.0 : 1.0 / N.value();
  const double ratio = N.is_pos_inf() ? 1.0 : (N.value() - 2.0) / N.value();
  const double ggh = gamma_at(oj, gj.grad, hj.grad);
  const double gg = gamma_at(oj, gj.grad, gj.grad);
  const double hh = gamma_at(oj, hj.grad, hj.grad);
  const double hf = gj.grad.dot(fr.H * hj.grad);
  const double denom = ratio * ggh * ggh + gg * hh;

  Residual r;
  if (denom <= 1e-12 * (1.0 + gg * hh)) {
    r.message = "degenerate denominator";
    return r;
  }
  const double b = hf - inv_n * ggh * fr.lf;
  if (rn.is_neg_inf()) {
    r.residual = kInf;
    r.ok = true;
    r.message = "R_N = -inf";
    return r;
  }
  const double rhs = rn.value() + inv_n * fr.lf * fr.lf + 2.0 * b * b / denom;
  r.scale = 1.0 + std::abs(fr.g2) + std::abs(rhs);
  r.residual = fr.g2 - rhs;
  r.ok = r.residual >= -tol * r.scale;
  return r;
}

Residual verify_bochner_identity(const DiffusionOperator& op, const Expr& f, std::span<const double> x, ExtReal N,
                                 double tol) {
  require_dimension_parameter(N);
  const PointFrame fr = point_frame(op, f, x);
  Residual r;
  if (fr.rank < op.dim()) {
    r.message = "degenerate point";
    return r;
  }
  const double n = fr.rank;
  if (!N.is_pos_inf() && N.value() <= n) {
    r.message = "requires N > n";
    return r;
  }
  const ExtReal rn = ricci_n_at(fr, N);
  const double inv_n = N.is_pos_inf() ? 0.0 : 1.0 / N.value();
  const Matrix Hw = fr.whitened_hessian();
  const Matrix traceless = Hw - inv_n * fr.lf * Matrix::Identity(fr.rank, fr.rank);
  double rhs = rn.value() + inv_n * fr.lf * fr.lf + traceless.squaredNorm();
  if (!N.is_pos_inf()) {
    const double d = fr.trH - n * inv_n * fr.lf;
    rhs += d * d / (N.value() - n);
  }
  r.scale = 1.0 + std::abs(fr.g2) + std::abs(rhs);
  r.residual = std::abs(fr.g2 - rhs);
  r.ok = r.residual <= tol * r.scale;
  return r;
}

SelfImprovementChain verify_self_improvement(const DiffusionOperator& op, const Expr& f, std::span<const double> x,
                                             ExtReal N, double K, double tol) {
  require_dimension_parameter(N);
  const PointFrame fr = point_frame(op, f, x);
  SelfImprovementChain c;
  const int n = fr.rank;
  if (!N.is_pos_inf() && N.value() < n) {
    c.message = "N below the dimension at x";
    return c;
  }
  if (!N.is_pos_inf() && N.value() == 1.0) {
    c.message = "N = 1 makes N/(N-1) undefined";
    return c;
  }
  const double inv_n = N.is_pos_inf() ? 0.0 : 1.0 / N.value();
  const double nfac = N.is_pos_inf() ? 1.0 : N.value() / (N.value() - 1.0);
  const Matrix Hw = fr.whitened_hessian();
  const Matrix B = Hw - inv_n * fr.lf * Matrix::Identity(n, n);
  const double base = K * fr.gamma + inv_n * fr.lf * fr.lf;

  c.gamma2 = fr.g2;
  c.first = base + B.squaredNorm();
  if (!N.is_pos_inf()) {
    const double d = fr.trH - n * inv_n * fr.lf;
    if (N.value() > n)
      c.first += d * d / (N.value() - n);
    else if (!trace_matches(fr.trH, fr.lf))
      c.first = kInf;
  }
  const double op_norm = spectral_norm(B);
  c.second = base + nfac * op_norm * op_norm;
  c.scale = 1.0 + std::abs(c.gamma2) + std::abs(c.second);
  c.r01 = c.gamma2 - c.first;
  c.r12 = c.first - c.second;
  bool ok = c.r01 >= -tol * c.scale && c.r12 >= -tol * c.scale;
  if (fr.gamma > 1e-12) {
    const double hff = fr.f.grad.dot(fr.H * fr.f.grad);
    const double q = hff / fr.gamma - inv_n * fr.lf;
    c.third = base + nfac * q * q;
    c.r23 = c.second - *c.third;
    ok = ok && *c.r23 >= -tol * c.scale;
  } else {
    c.message = "Gamma(f)(x) = 0; last term skipped";
  }
  c.ok = ok;
  return c;
}

BEReport check_be(const DiffusionOperator& op, const Expr& K, ExtReal N, const std::vector<Point>& grid, double tol) {
  require_dimension_parameter(N);
  require_chart(op, K, "curvature bound K");
  if (grid.empty()) throw std::invalid_argument("empty grid");
  const Tape kt({K});
  BEReport rep;
  rep.N = N;
  rep.tol = tol;
  rep.points.resize(grid.size());
  parallel_for(grid.size(), [&](std::size_t i) {
    BEPoint& p = rep.points[i];
    p.x = grid[i];
    const OperatorJet oj = op.jet(p.x);
    const RicciForm rf = ricci_form_at(oj, N);
    p.rank = rf.rank;
    p.degenerate = rf.rank < op.dim();
    p.mu = min_ricci_ratio(rf);
    p.K = kt.eval(p.x)[0];
    p.residual = p.mu - ExtReal(p.K);
    p.pass = p.residual >= ExtReal(-tol);
  });
  for (std::size_t i = 0; i < rep.points.size(); ++i) {
    const BEPoint& p = rep.points[i];
    rep.inf_mu = min(rep.inf_mu, p.mu);
    rep.min_residual = min(rep.min_residual, p.residual);
    if (!p.pass) rep.violations.push_back(i);
    if (p.degenerate) rep.degenerate_points.push_back(i);
  }
  rep.pass = rep.violations.empty();
  return rep;
}

ExtReal best_k(const DiffusionOperator& op, ExtReal N, const std::vector<Point>& grid) {
  return check_be(op, Expr(0.0), N, grid).inf_mu;
}

}  // namespace gammaforge
