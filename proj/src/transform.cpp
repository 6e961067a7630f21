#include "gammaforge/transform.hpp"

#include <cmath>
#include <random>

#include "gammaforge/parallel.hpp"

namespace gammaforge {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Matrix outer_sym(const Vector& a, const Vector& b) { return 0.5 * (a * b.transpose() + b * a.transpose()); }

bool is_constant_field(const Expr& e) { return e.max_variable() == 0; }

void require_order(ExtReal N, ExtReal Np, bool allow_equal, const char* what) {
  require_dimension_parameter(N);
  require_dimension_parameter(Np);
  if (Np < N) throw std::invalid_argument(std::string(what) + ": N' must be >= N");
  if (Np == N && !allow_equal)
    throw std::invalid_argument(std::string(what) + ": N' = N is only admissible for the conformal transformation");
}

double inv_gap(ExtReal N, ExtReal Np) {
  if (Np.is_pos_inf() || Np == N) return 0.0;
  return 1.0 / (Np.value() - N.value());
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Evaluates body(x, op_jet, whitening) over the grid and takes the infimum.
template <class Body>
KPrimeResult grid_infimum(const DiffusionOperator& op, const std::vector<Point>& grid, Body&& body) {
  if (grid.empty()) throw std::invalid_argument("empty grid");
  KPrimeResult r;
  r.points.resize(grid.size());
  parallel_for(grid.size(), [&](std::size_t i) {
    const OperatorJet oj = op.jet(grid[i]);
    const Whitening w = whiten(oj.A);
    r.points[i] = KPrimePoint{grid[i], body(grid[i], oj, w)};
  });
  for (std::size_t i = 0; i < r.points.size(); ++i)
    if (r.points[i].value < r.inf || i == 0) {
      r.inf = r.points[i].value;
      r.argmin = i;
    }
  return r;
}

ExtReal add_min_eig(double scalar, const Matrix& Q, const Whitening& w) {
  if (w.rank == 0) return ExtReal::pos_inf();
  return scalar + min_generalized_eigenvalue(Q, w);
}

struct CompiledPairs {
  std::vector<CompiledFunction> g, h;
  CompiledPairs(const std::vector<TransformPair>& pairs, int n) {
    for (const auto& p : pairs) {
      g.emplace_back(p.g, n);
      h.emplace_back(p.h, n);
    }
  }
};

}  // namespace

std::string to_string(TransformKind kind) {
  switch (kind) {
    case TransformKind::General: return "general";
    case TransformKind::TimeChange: return "time_change";
    case TransformKind::Drift: return "drift";
    case TransformKind::Metric: return "metric";
    case TransformKind::Conformal: return "conformal";
    case TransformKind::Doob: return "doob";
  }
  return "general";
}

TransformKind transform_kind_from_string(const std::string& name) {
  for (auto k : {TransformKind::General, TransformKind::TimeChange, TransformKind::Drift, TransformKind::Metric,
                 TransformKind::Conformal, TransformKind::Doob})
    if (to_string(k) == name) return k;
  throw std::invalid_argument("unknown transform kind '" + name + "'");
}

TransformSpec TransformSpec::general(const Expr& f, std::vector<TransformPair> pairs) {
  TransformSpec s;
  s.kind = TransformKind::General;
  s.f = f;
  s.pairs = std::move(pairs);
  return s;
}

TransformSpec TransformSpec::time_change(const Expr& f) {
  TransformSpec s;
  s.kind = TransformKind::TimeChange;
  s.f = f;
  return s;
}

TransformSpec TransformSpec::time_change_exp(const Expr& w) {
  TransformSpec s = time_change(exp(-w));
  s.w = w;
  return s;
}

TransformSpec TransformSpec::drift(const Expr& h) {
  TransformSpec s;
  s.kind = TransformKind::Drift;
  s.pairs = {{Expr(1.0), h}};
  return s;
}

TransformSpec TransformSpec::vector_drift(std::vector<TransformPair> pairs) {
  TransformSpec s;
  s.kind = TransformKind::Drift;
  s.pairs = std::move(pairs);
  return s;
}

TransformSpec TransformSpec::metric(const Expr& f) {
  TransformSpec s;
  s.kind = TransformKind::Metric;
  s.f = f;
  s.pairs = {{Expr(2.0), f}};
  return s;
}

TransformSpec TransformSpec::conformal_factor(const Expr& f, ExtReal N) {
  require_dimension_parameter(N);
  if (!N.is_finite()) throw std::invalid_argument("conformal transformation needs a finite N");
  TransformSpec s;
  s.kind = TransformKind::Conformal;
  s.f = f;
  s.N = N;
  s.pairs = {{Expr(-(N.value() - 2.0)), f}};
  return s;
}

TransformSpec TransformSpec::conformal(const Expr& w, ExtReal N) {
  TransformSpec s = conformal_factor(exp(-w), N);
  s.w = w;
  return s;
}

TransformSpec TransformSpec::doob(const Expr& rho) {
  TransformSpec s;
  s.kind = TransformKind::Doob;
  s.rho = rho;
  s.pairs = {{Expr(1.0), Expr(2.0) * log(rho)}};
  return s;
}

DiffusionOperator transform_operator(const DiffusionOperator& op, const TransformSpec& spec,
                                     const std::vector<Point>& check_points, double tol) {
  const int n = op.dim();
  require_chart(op, spec.f, "transform factor f");
  for (const auto& p : spec.pairs) {
    require_chart(op, p.g, "transform weight g");
    require_chart(op, p.h, "transform potential h");
  }
  if (!check_points.empty()) {
    const Tape ft({spec.f});
    for (const Point& x : check_points) {
      const double fv = ft.eval(x)[0];
      if (!(fv > 0.0)) throw DomainError("transform factor f is not positive at a check point (f = " + std::to_string(fv) + ")");
    }
    if (spec.kind == TransformKind::Doob) {
      if (!spec.rho) throw std::invalid_argument("Doob transformation needs rho");
      const Tape rt({*spec.rho, apply_L(op, *spec.rho)});
      for (const Point& x : check_points) {
        const auto v = rt.eval(x);
        if (!(v[0] > 0.0)) throw DomainError("Doob transformation needs rho > 0");
        if (std::abs(v[1]) > tol * (1.0 + std::abs(v[0])))
          throw DomainError("Doob transformation needs L rho = 0 (|L rho| = " + std::to_string(std::abs(v[1])) + ")");
      }
    }
  }
  const Expr f2 = spec.f * spec.f;
  std::vector<std::vector<Expr>> a(n, std::vector<Expr>(n));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a[i][j] = f2 * op.a(i, j);
  std::vector<Expr> b(n);
  for (int j = 0; j < n; ++j) {
    Expr extra(0.0);
    for (const auto& p : spec.pairs) {
      Expr grad_h(0.0);
      for (int k = 0; k < n; ++k)
        if (!op.a(j, k).is_zero()) grad_h = grad_h + op.a(j, k) * p.h.diff(k + 1);
      extra = extra + p.g * grad_h;
    }
    b[j] = f2 * op.b(j) + spec.f * extra;
  }
  return DiffusionOperator(a, b);
}

KPrimeResult kprime_general(const DiffusionOperator& op, const TransformSpec& spec, const Expr& K, ExtReal N,
                            ExtReal Np, const std::vector<Point>& grid) {
  const bool constant_f = is_constant_field(spec.f);
  const bool equal_ok = spec.kind == TransformKind::Conformal || (N.is_pos_inf() && constant_f);
  require_order(N, Np, equal_ok, "kprime_general");
  if (N.is_pos_inf() && !constant_f)
    throw std::invalid_argument("kprime_general: N = inf requires a constant factor f");
  const int n = op.dim();
  const CompiledFunction cf(spec.f, n);
  const CompiledFunction ck(K, n);
  const CompiledPairs cp(spec.pairs, n);
  const double ig = inv_gap(N, Np);
  const double nm2 = N.is_pos_inf() ? 0.0 : N.value() - 2.0;
  return grid_infimum(op, grid, [&](const Point& x, const OperatorJet& oj, const Whitening& w) -> ExtReal {
    const FunctionJet f = cf.jet(x);
    const double Kx = ck.value(x);
    const Vector Af = oj.A * f.grad;
    double scalar = f.value * f.value * Kx + f.value * apply_L_at(oj, f) - f.grad.dot(Af);
    Vector d = nm2 * Af;
    Matrix Q = -nm2 * Af * Af.transpose();
    for (std::size_t i = 0; i < spec.pairs.size(); ++i) {
      const FunctionJet g = cp.g[i].jet(x);
      const FunctionJet h = cp.h[i].jet(x);
      const Vector Ah = oj.A * h.grad;
      scalar += g.value * Ah.dot(f.grad);
      d += g.value * Ah;
      const Vector Afg = oj.A * (g.value * f.grad + f.value * g.grad);
      Q -= f.value * g.value * hessian_matrix_at(oj, h) + outer_sym(Afg, Ah);
    }
    Q -= ig * d * d.transpose();
    return add_min_eig(scalar, Q, w);
  });
}

double time_change_n_star(ExtReal N, ExtReal Np) {
  require_order(N, Np, false, "time change");
  const double Nv = N.value();
  if (Np.is_pos_inf()) return 2.0 + std::max(0.0, Nv - 2.0);
  const double Npv = Np.value();
  return 2.0 + std::max(0.0, (Nv - 2.0) * (Npv - 2.0)) / (Npv - Nv);
}

KPrimeResult kprime_time_change(const DiffusionOperator& op, const Expr& f, const Expr& K, ExtReal N, ExtReal Np,
                                const std::vector<Point>& grid) {
  const double nstar = time_change_n_star(N, Np);
  const int n = op.dim();
  const CompiledFunction cf(f, n);
  const CompiledFunction ck(K, n);
  KPrimeResult r = grid_infimum(op, grid, [&](const Point& x, const OperatorJet& oj, const Whitening&) -> ExtReal {
    const FunctionJet fj = cf.jet(x);
    const double gf = gamma_at(oj, fj.grad, fj.grad);
    const double half_lf2 = fj.value * apply_L_at(oj, fj) + gf;
    return fj.value * fj.value * ck.value(x) + half_lf2 - nstar * gf;
  });
  r.n_star = nstar;
  return r;
}

KPrimeResult kprime_drift(const DiffusionOperator& op, const std::vector<TransformPair>& Z, const Expr& K, ExtReal N,
                          ExtReal Np, const std::vector<Point>& grid) {
  require_order(N, Np, N.is_pos_inf(), "kprime_drift");
  const int n = op.dim();
  const CompiledFunction ck(K, n);
  const CompiledPairs cp(Z, n);
  const double ig = inv_gap(N, Np);
  return grid_infimum(op, grid, [&](const Point& x, const OperatorJet& oj, const Whitening& w) -> ExtReal {
    Matrix DZ = Matrix::Zero(n, n);
    Vector z = Vector::Zero(n);
    for (std::size_t i = 0; i < Z.size(); ++i) {
      const FunctionJet g = cp.g[i].jet(x);
      const FunctionJet h = cp.h[i].jet(x);
      const Vector Ah = oj.A * h.grad;
      DZ += g.value * hessian_matrix_at(oj, h) + outer_sym(oj.A * g.grad, Ah);
      z += g.value * Ah;
    }
    const Matrix S = DZ + ig * z * z.transpose();
    if (w.rank == 0) return ExtReal::pos_inf();
    return ck.value(x) - max_generalized_eigenvalue(S, w);
  });
}

KPrimeResult conformal_kprime(const DiffusionOperator& op, const Expr& f, const Expr& K, ExtReal N,
                              const std::vector<Point>& grid) {
  require_dimension_parameter(N);
  if (!N.is_finite()) throw std::invalid_argument("conformal_kprime needs a finite N");
  const double Nv = N.value();
  const int n = op.dim();
  const CompiledFunction cf(f, n);
  const CompiledFunction ck(K, n);
  return grid_infimum(op, grid, [&](const Point& x, const OperatorJet& oj, const Whitening& w) -> ExtReal {
    const FunctionJet fj = cf.jet(x);
    const double gf = gamma_at(oj, fj.grad, fj.grad);
    const double scalar = fj.value * fj.value * ck.value(x) + fj.value * apply_L_at(oj, fj) - (Nv - 1.0) * gf;
    return add_min_eig(scalar, (Nv - 2.0) * fj.value * hessian_matrix_at(oj, fj), w);
  });
}

MmsKPrime mms_kprime(const DiffusionOperator& op, const Expr& v, const Expr& w, const Expr& K, ExtReal N, ExtReal Np,
                     const std::vector<Point>& grid) {
  require_dimension_parameter(N);
  require_dimension_parameter(Np);
  const bool w_zero = w.is_zero();
  if (Np < N) throw std::invalid_argument("mms_kprime: N' must be >= N");
  if (N.is_pos_inf() && !w_zero) throw std::invalid_argument("mms_kprime: N = inf is only admissible with w = 0");
  const int n = op.dim();
  const CompiledFunction cv(v, n), cw(w, n), ck(K, n);
  const Expr vm2w = v - Expr(2.0) * w;
  const CompiledFunction ch(vm2w, n);
  const double Nv = N.is_pos_inf() ? 0.0 : N.value();
  const double nm2 = N.is_pos_inf() ? 0.0 : Nv - 2.0;
  const bool equal = Np == N;
  const double ig = inv_gap(N, Np);

  MmsKPrime out;
  out.value = grid_infimum(op, grid, [&](const Point& x, const OperatorJet& oj, const Whitening& wh) -> ExtReal {
    const FunctionJet vj = cv.jet(x), wj = cw.jet(x), hj = ch.jet(x);
    const Vector Aw = oj.A * wj.grad;
    const Vector Ah = oj.A * hj.grad;
    const Vector d = oj.A * (vj.grad - Nv * wj.grad);
    if (equal && !N.is_pos_inf() && d.norm() > 1e-10 * (1.0 + (oj.A * vj.grad).norm()))
      throw std::invalid_argument("mms_kprime: N' = N requires w = v/N");
    const double scalar = ck.value(x) - apply_L_at(oj, wj) + wj.grad.dot(oj.A * (2.0 * wj.grad - vj.grad));
    const Matrix S =
        ig * d * d.transpose() + nm2 * Aw * Aw.transpose() + hessian_matrix_at(oj, hj) - 2.0 * outer_sym(Aw, Ah);
    if (wh.rank == 0) return ExtReal::pos_inf();
    return std::exp(-2.0 * wj.value) * (scalar - max_generalized_eigenvalue(S, wh));
  });

  if (v.is_zero() && !equal && !N.is_pos_inf()) {
    const Expr f = exp(-w);
    const CompiledFunction cf(f, n), cf2(f * f, n);
    const double coef = (Np.is_pos_inf() ? Nv : Np.value() * Nv / (Np.value() - Nv)) - 2.0;
    out.no_measure = grid_infimum(op, grid, [&](const Point& x, const OperatorJet& oj, const Whitening& wh) -> ExtReal {
      const FunctionJet fj = cf.jet(x);
      const FunctionJet f2 = cf2.jet(x);
      const Vector Af = oj.A * fj.grad;
      const Matrix S = coef * Af * Af.transpose() + hessian_matrix_at(oj, f2);
      if (wh.rank == 0) return ExtReal::pos_inf();
      return ck.value(x) * fj.value * fj.value + 0.5 * apply_L_at(oj, f2) - max_generalized_eigenvalue(S, wh);
    });
  }
  return out;
}

IdentityReport conformal_ricci_identity(const DiffusionOperator& op, const Expr& w, ExtReal N, const Expr& u,
                                        const std::vector<Point>& grid, double tol) {
  require_dimension_parameter(N);
  if (!N.is_finite()) throw std::invalid_argument("conformal identity needs a finite N");
  if (grid.empty()) throw std::invalid_argument("empty grid");
  const int n = op.dim();
  const double nm2 = N.value() - 2.0;
  const DiffusionOperator op2 = transform_operator(op, TransformSpec::conformal(w, N));
  const CompiledFunction cu(u, n), cw(w, n);
  IdentityReport rep;
  rep.tol = tol;
  rep.points.resize(grid.size());
  std::vector<char> skip(grid.size(), 0);
  parallel_for(grid.size(), [&](std::size_t i) {
    const Point& x = grid[i];
    IdentityPoint& p = rep.points[i];
    p.x = x;
    const OperatorJet oj = op.jet(x);
    const OperatorJet oj2 = op2.jet(x);
    const FunctionJet uj = cu.jet(x), wj = cw.jet(x);
    const PointFrame fr = make_frame(oj, uj, x);
    if (fr.rank < n) {
      skip[i] = 1;
      return;
    }
    p.lhs = ricci_n_at(make_frame(oj2, uj, x), N);
    const ExtReal rn = ricci_n_at(fr, N);
    if (rn.is_neg_inf()) {
      p.rhs = ExtReal::neg_inf();
    } else {
      const double gu = fr.gamma;
      const double gw = gamma_at(oj, wj.grad, wj.grad);
      const double gwu = gamma_at(oj, wj.grad, uj.grad);
      const double hw = uj.grad.dot(hessian_matrix_at(oj, wj) * uj.grad);
      const double inner = rn.value() + (-apply_L_at(oj, wj) - nm2 * gw) * gu - nm2 * hw + nm2 * gwu * gwu;
      p.rhs = std::exp(-4.0 * wj.value) * inner;
    }
    if (p.lhs.is_finite() && p.rhs.is_finite()) {
      p.scale = 1.0 + std::abs(p.lhs.value()) + std::abs(p.rhs.value());
      p.residual = std::abs(p.lhs.value() - p.rhs.value());
    } else {
      p.residual = p.lhs == p.rhs ? 0.0 : kInf;
    }
  });
  std::vector<IdentityPoint> kept;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (skip[i]) {
      rep.skipped.push_back(i);
      continue;
    }
    rep.max_scaled_residual = std::max(rep.max_scaled_residual, rep.points[i].residual / rep.points[i].scale);
    kept.push_back(rep.points[i]);
  }
  rep.points = std::move(kept);
  rep.ok = rep.max_scaled_residual <= tol;
  return rep;
}

BoundReport verify_transform_bound(const DiffusionOperator& op, const TransformSpec& spec, ExtReal N, ExtReal Np,
                                   const std::vector<Expr>& u_tests, const std::vector<Point>& grid, double tol) {
  const bool constant_f = is_constant_field(spec.f);
  const bool equal_ok = spec.kind == TransformKind::Conformal || (N.is_pos_inf() && constant_f);
  require_order(N, Np, equal_ok, "verify_transform_bound");
  if (N.is_pos_inf() && !constant_f)
    throw std::invalid_argument("verify_transform_bound: N = inf requires a constant factor f");
  if (grid.empty() || u_tests.empty()) throw std::invalid_argument("empty grid or test function list");
  const int n = op.dim();
  const DiffusionOperator op2 = transform_operator(op, spec, grid);
  const CompiledFunction cf(spec.f, n);
  const CompiledPairs cp(spec.pairs, n);
  std::vector<CompiledFunction> cu;
  for (const Expr& u : u_tests) cu.emplace_back(u, n);
  std::optional<CompiledFunction> cw;
  if (spec.kind == TransformKind::TimeChange && spec.w) cw.emplace(*spec.w, n);
  const double ig = inv_gap(N, Np);
  const double nm2 = N.is_pos_inf() ? 0.0 : N.value() - 2.0;
  double alt_coef = 0.0;
  if (cw && !N.is_pos_inf())
    alt_coef = Np.is_pos_inf() ? nm2 : nm2 * (Np.value() - 2.0) / (Np.value() - N.value());

  BoundReport rep;
  rep.tol = tol;
  std::vector<std::vector<BoundRecord>> per_point(grid.size());
  std::vector<char> skip(grid.size(), 0);
  parallel_for(grid.size(), [&](std::size_t i) {
    const Point& x = grid[i];
    const OperatorJet oj = op.jet(x);
    const OperatorJet oj2 = op2.jet(x);
    if (whiten(oj.A).rank < n) {
      skip[i] = 1;
      return;
    }
    const FunctionJet f = cf.jet(x);
    const double fv = f.value;
    const Vector df2 = 2.0 * fv * f.grad;
    const double lf2 = 2.0 * fv * apply_L_at(oj, f) + 2.0 * gamma_at(oj, f.grad, f.grad);
    const double gf2 = gamma_at(oj, df2, df2);
    std::vector<FunctionJet> g, h;
    std::vector<Matrix> Mh;
    for (std::size_t k = 0; k < spec.pairs.size(); ++k) {
      g.push_back(cp.g[k].jet(x));
      h.push_back(cp.h[k].jet(x));
      Mh.push_back(hessian_matrix_at(oj, h.back()));
    }
    for (std::size_t ui = 0; ui < cu.size(); ++ui) {
      const FunctionJet u = cu[ui].jet(x);
      BoundRecord rec;
      rec.x = x;
      rec.u_index = ui;
      rec.lhs = ricci_n_at(make_frame(oj2, u, x), Np);
      const ExtReal rn = ricci_n_at(make_frame(oj, u, x), N);
      const double gu = gamma_at(oj, u.grad, u.grad);
      const double gf2u = gamma_at(oj, df2, u.grad);
      double sq = 0.5 * nm2 * gf2u;
      double rest = 0.5 * (fv * fv * lf2 - gf2) * gu - 0.25 * nm2 * gf2u * gf2u;
      for (std::size_t k = 0; k < spec.pairs.size(); ++k) {
        const double ghu = gamma_at(oj, h[k].grad, u.grad);
        sq += fv * g[k].value * ghu;
        rest -= fv * fv * fv * g[k].value * u.grad.dot(Mh[k] * u.grad);
        rest += 0.5 * fv * g[k].value * gamma_at(oj, h[k].grad, df2) * gu;
        const Vector dfg = g[k].value * f.grad + fv * g[k].grad;
        rest -= fv * fv * gamma_at(oj, dfg, u.grad) * ghu;
      }
      if (rn.is_neg_inf()) {
        rec.rhs = ExtReal::neg_inf();
        rec.residual = kInf;
      } else {
        const double rhs = fv * fv * fv * fv * rn.value() - ig * sq * sq + rest;
        rec.rhs = rhs;
        if (rec.lhs.is_neg_inf()) {
          rec.residual = -kInf;
        } else {
          rec.scale = 1.0 + std::abs(rec.lhs.value()) + std::abs(rhs);
          rec.residual = rec.lhs.value() - rhs;
        }
        if (cw) {
          const FunctionJet wj = cw->jet(x);
          const double gwu = gamma_at(oj, wj.grad, u.grad);
          rec.rhs_alternative = std::exp(-4.0 * wj.value) * (rn.value() - apply_L_at(oj, wj) * gu - alt_coef * gwu * gwu);
        }
      }
      per_point[i].push_back(rec);
    }
  });
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (skip[i]) {
      rep.skipped.push_back(grid[i]);
      continue;
    }
    for (auto& rec : per_point[i]) {
      rep.min_scaled_residual = std::min(rep.min_scaled_residual, rec.residual / rec.scale);
      if (rec.rhs_alternative && rec.rhs.is_finite()) {
        const double gap = std::abs(*rec.rhs_alternative - rec.rhs.value()) / rec.scale;
        rep.max_alternative_gap = std::max(rep.max_alternative_gap, gap);
      }
      rep.records.push_back(std::move(rec));
    }
  }
  rep.ok = rep.min_scaled_residual >= -tol && rep.max_alternative_gap <= tol;
  return rep;
}

// ---------------------------------------------------------------------------
// Falsifier

namespace {

struct Quadratic {
  Vector lin;
  Matrix quad;  // value = lin.x + x^T quad x / 2

  double value(const Vector& x) const { return lin.dot(x) + 0.5 * x.dot(quad * x); }
  FunctionJet jet(const Vector& x) const { return FunctionJet{value(x), lin + quad * x, quad}; }
  Expr expr() const {
    const int n = static_cast<int>(lin.size());
    Expr e(0.0);
    for (int i = 0; i < n; ++i) {
      e = e + Expr(lin(i)) * Expr::var(i + 1);
      for (int j = 0; j < n; ++j) e = e + Expr(0.5 * quad(i, j)) * Expr::var(i + 1) * Expr::var(j + 1);
    }
    return e;
  }
  std::vector<double> coefficients() const {
    std::vector<double> c(lin.data(), lin.data() + lin.size());
    for (int i = 0; i < quad.rows(); ++i)
      for (int j = i; j < quad.cols(); ++j) c.push_back(quad(i, j));
    return c;
  }
};

Quadratic random_quadratic(std::mt19937_64& rng, int n, double lin_scale, double quad_scale) {
  std::normal_distribution<double> nd(0.0, 1.0);
  Quadratic q;
  q.lin = Vector(n);
  q.quad = Matrix(n, n);
  for (int i = 0; i < n; ++i) q.lin(i) = lin_scale * nd(rng);
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) q.quad(i, j) = q.quad(j, i) = quad_scale * nd(rng);
  return q;
}

struct TrialOutcome {
  std::vector<double> residual;  // per pair, scaled
  Quadratic u;
  Vector x;
};

}  // namespace

FalsifierReport wrong_constants_falsifier(int n, double N, const FalsifierOptions& opts,
                                          std::vector<ConstantPair> pairs) {
  if (n < 1) throw std::invalid_argument("falsifier needs n >= 1");
  if (N < 1.0) throw std::invalid_argument("falsifier needs N >= 1");
  if (opts.functions == 0 || opts.trials == 0) throw std::invalid_argument("falsifier needs a positive budget");
  if (pairs.empty()) pairs = {{-(N - 2.0), N - 2.0}, {-N, 2.0 * (N - 2.0)}, {-(N - 4.0), N}};
  FalsifierReport rep;
  rep.n = n;
  rep.N = N;
  rep.trials = opts.trials;
  rep.seed = opts.seed;
  rep.threshold = opts.threshold;
  for (const auto& p : pairs) rep.pairs.push_back(FalsifierPairResult{p, 0, kInf, std::nullopt});

  const DiffusionOperator eu = DiffusionOperator::euclidean(n);
  const std::size_t blocks = std::min(opts.functions, opts.trials);
  const double nm2 = N - 2.0;
  struct BlockResult {
    Quadratic w;
    std::vector<std::size_t> violations;
    std::vector<double> min_residual;
    std::vector<std::optional<TrialOutcome>> best;
  };
  std::vector<BlockResult> results(blocks);

  parallel_for(blocks, [&](std::size_t b) {
    std::mt19937_64 rng(splitmix64(opts.seed ^ splitmix64(b + 1)));
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    std::uniform_real_distribution<double> expo(-3.0, 0.0);
    BlockResult& br = results[b];
    br.w = random_quadratic(rng, n, 1.0, 0.5);
    br.violations.assign(pairs.size(), 0);
    br.min_residual.assign(pairs.size(), kInf);
    br.best.resize(pairs.size());
    const DiffusionOperator op2 = transform_operator(eu, TransformSpec::conformal(br.w.expr(), N));
    const std::size_t count = opts.trials / blocks + (b < opts.trials % blocks ? 1 : 0);
    for (std::size_t t = 0; t < count; ++t) {
      Quadratic u = random_quadratic(rng, n, 1.0, std::pow(10.0, expo(rng)));
      Vector x(n);
      for (int i = 0; i < n; ++i) x(i) = unit(rng);
      const Point xp(x.data(), x.data() + n);
      const OperatorJet oj2 = op2.jet(xp);
      if (t % 2 == 1) {
        // Hessian of u chosen so that the transformed Hessian is nearly pure trace at x.
        const Vector grad = u.lin + u.quad * x;
        const Matrix C = hessian_matrix_at(oj2, FunctionJet{0.0, grad, Matrix::Zero(n, n)});
        const double f4 = oj2.A(0, 0) * oj2.A(0, 0);
        const Matrix F = -C / f4 + (C.trace() / (n * f4)) * Matrix::Identity(n, n) + (u.quad - u.quad.trace() / n * Matrix::Identity(n, n));
        u.quad = F;
        u.lin = grad - F * x;
      }
      const FunctionJet uj = u.jet(x);
      const FunctionJet wj = br.w.jet(x);
      const double lu = apply_L_at(oj2, uj);
      const double lhs = gamma2_at(oj2, uj) - lu * lu / N;
      const double gu = uj.grad.squaredNorm();
      const double gw = wj.grad.squaredNorm();
      const double gwu = wj.grad.dot(uj.grad);
      const double hw = uj.grad.dot(wj.hess * uj.grad);
      const double lw = wj.hess.trace();
      const double e4 = std::exp(-4.0 * wj.value);
      for (std::size_t k = 0; k < pairs.size(); ++k) {
        const double rhs = e4 * (-lw * gu + pairs[k].c1 * gw * gu - nm2 * hw + pairs[k].c2 * gwu * gwu);
        const double scaled = (lhs - rhs) / (1.0 + std::abs(lhs) + std::abs(rhs));
        if (scaled < -opts.threshold) ++br.violations[k];
        if (scaled < br.min_residual[k]) {
          br.min_residual[k] = scaled;
          br.best[k] = TrialOutcome{{}, u, x};
        }
      }
    }
  });

  for (const BlockResult& br : results) {
    for (std::size_t k = 0; k < pairs.size(); ++k) {
      auto& pr = rep.pairs[k];
      pr.violations += br.violations[k];
      if (br.min_residual[k] < pr.min_residual) {
        pr.min_residual = br.min_residual[k];
        const TrialOutcome& o = *br.best[k];
        FalsifierWitness wit;
        wit.w_coefficients = br.w.coefficients();
        wit.u_coefficients = o.u.coefficients();
        wit.x = Point(o.x.data(), o.x.data() + o.x.size());
        wit.w = br.w.expr().str();
        wit.u = o.u.expr().str();
        wit.residual = br.min_residual[k];
        pr.witness = wit;
      }
    }
  }
  for (auto& pr : rep.pairs)
    if (pr.violations == 0) pr.witness.reset();
  return rep;
}

}  // namespace gammaforge
