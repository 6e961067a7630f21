#include "gammaforge/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Eigenvalues>

namespace gammaforge {

namespace {

struct Coefficients1D {
  Tape tape;
  explicit Coefficients1D(const DiffusionOperator& op) : tape({op.a(0, 0), op.b(0)}) {}

  double drift_ratio(double x) const {
    const auto v = tape.eval(std::vector<double>{x});
    if (!(v[0] > 0.0)) throw DomainError("second-order coefficient is not positive at x = " + std::to_string(x));
    return v[1] / v[0];
  }
  double a(double x) const {
    const double v = tape.eval(std::vector<double>{x})[0];
    if (!(v > 0.0)) throw DomainError("second-order coefficient is not positive at x = " + std::to_string(x));
    return v;
  }
};

void require_1d(const DiffusionOperator& op) {
  if (op.dim() != 1) throw DimensionError("spectral routines need a 1-D operator");
}

void validate(const Domain1D& d) {
  if (!(d.right > d.left)) throw std::invalid_argument("domain needs left < right");
  if (d.m < 3) throw std::invalid_argument("domain needs at least 3 grid points");
}

std::vector<Point> node_grid(const Discretization1D& d) {
  std::vector<Point> g;
  g.reserve(d.nodes.size());
  for (double x : d.nodes) g.push_back({x});
  return g;
}

}  // namespace

Discretization1D discretize_1d(const DiffusionOperator& op, const Domain1D& domain) {
  require_1d(op);
  validate(domain);
  const Coefficients1D coef(op);
  const int m = domain.m;
  Discretization1D d;
  d.domain = domain;
  d.h = domain.circle ? (domain.right - domain.left) / m : (domain.right - domain.left) / (m - 1);
  const double h = d.h;
  const int cells = domain.circle ? m : m - 1;

  // log p at nodes and midpoints; Simpson on each half cell.
  std::vector<double> logp_node(cells + 1, 0.0), logp_mid(cells, 0.0);
  auto simpson = [&](double x0, double x1) {
    return (x1 - x0) / 6.0 * (coef.drift_ratio(x0) + 4.0 * coef.drift_ratio(0.5 * (x0 + x1)) + coef.drift_ratio(x1));
  };
  double total_abs = 0.0;
  for (int i = 0; i < cells; ++i) {
    const double x0 = domain.left + i * h, xm = x0 + 0.5 * h, x1 = x0 + h;
    const double s0 = simpson(x0, xm), s1 = simpson(xm, x1);
    logp_mid[i] = logp_node[i] + s0;
    logp_node[i + 1] = logp_mid[i] + s1;
    total_abs += std::abs(s0) + std::abs(s1);
  }
  if (domain.circle && std::abs(logp_node[cells]) > 1e-8 * (1.0 + total_abs))
    throw DomainError("operator on the circle is not reversible: int b/a over the period is nonzero");

  d.nodes.resize(m);
  Vector logD(m);
  for (int i = 0; i < m; ++i) {
    const double x = domain.left + i * h;
    d.nodes[i] = x;
    const double vol = (!domain.circle && (i == 0 || i == m - 1)) ? 0.5 * h : h;
    logD(i) = logp_node[i] - std::log(coef.a(x)) + std::log(vol);
  }
  const double shift = logD.maxCoeff();
  d.weights = (logD.array() - shift).exp();
  d.weights /= d.weights.sum();

  d.matrix = Matrix::Zero(m, m);
  d.sym_offdiagonal = Vector::Zero(m - 1);
  for (int c = 0; c < cells; ++c) {
    const int i = c, j = (c + 1) % m;
    const double up = std::exp(logp_mid[c] - logD(i)) / h;
    const double down = std::exp(logp_mid[c] - logD(j)) / h;
    d.matrix(i, j) += up;
    d.matrix(j, i) += down;
    d.matrix(i, i) -= up;
    d.matrix(j, j) -= down;
    const double s = std::exp(logp_mid[c] - 0.5 * (logD(i) + logD(j))) / h;
    if (c < m - 1)
      d.sym_offdiagonal(c) = s;
    else
      d.sym_corner = s;
  }
  d.sym_diagonal = d.matrix.diagonal();

  double scale = 0.0, asym = 0.0, rows = 0.0;
  for (int i = 0; i < m; ++i) {
    rows = std::max(rows, std::abs(d.matrix.row(i).sum()));
    for (int j = 0; j < m; ++j) {
      const double dij = d.weights(i) * d.matrix(i, j);
      scale = std::max(scale, std::abs(dij));
      asym = std::max(asym, std::abs(dij - d.weights(j) * d.matrix(j, i)));
    }
  }
  d.symmetry_residual = scale > 0.0 ? asym / scale : 0.0;
  const double diag_scale = d.matrix.diagonal().cwiseAbs().maxCoeff();
  d.row_sum_residual = diag_scale > 0.0 ? rows / diag_scale : rows;
  return d;
}

std::vector<double> spectrum(const Discretization1D& d) {
  const int m = static_cast<int>(d.sym_diagonal.size());
  Eigen::SelfAdjointEigenSolver<Matrix> es;
  if (d.domain.circle) {
    Matrix S = Matrix::Zero(m, m);
    S.diagonal() = d.sym_diagonal;
    for (int i = 0; i + 1 < m; ++i) S(i, i + 1) = S(i + 1, i) = d.sym_offdiagonal(i);
    S(0, m - 1) += d.sym_corner;
    S(m - 1, 0) += d.sym_corner;
    es.compute(-S, Eigen::EigenvaluesOnly);
  } else {
    es.computeFromTridiagonal(-d.sym_diagonal, -d.sym_offdiagonal, Eigen::EigenvaluesOnly);
  }
  if (es.info() != Eigen::Success) throw std::runtime_error("eigenvalue solver failed");
  const Vector& ev = es.eigenvalues();
  return std::vector<double>(ev.data(), ev.data() + ev.size());
}

double spectral_gap(const Discretization1D& d) {
  const auto ev = spectrum(d);
  if (ev.size() < 2) throw std::runtime_error("spectrum too small for a gap");
  return std::max(0.0, ev[1]);
}

LichnerowiczReport lichnerowicz_check(const DiffusionOperator& op, const Expr& K, ExtReal N,
                                      const std::optional<TransformSpec>& spec, std::optional<ExtReal> n_prime,
                                      const Domain1D& domain, double tol) {
  require_1d(op);
  require_dimension_parameter(N);
  LichnerowiczReport rep;
  rep.tol = tol;
  const Discretization1D base = discretize_1d(op, domain);
  const std::vector<Point> grid = node_grid(base);
  if (!spec) {
    rep.n_prime = n_prime.value_or(N);
    if (rep.n_prime != N) throw std::invalid_argument("N' differs from N without a transformation");
    const CompiledFunction ck(K, 1);
    double inf = std::numeric_limits<double>::infinity();
    for (const Point& x : grid) inf = std::min(inf, ck.value(x));
    rep.inf_k = inf;
    rep.gap = spectral_gap(base);
  } else {
    if (n_prime)
      rep.n_prime = *n_prime;
    else
      rep.n_prime = spec->kind == TransformKind::Conformal ? N : ExtReal::pos_inf();
    const DiffusionOperator op2 = transform_operator(op, *spec, grid);
    KPrimeResult kp;
    if (spec->kind == TransformKind::TimeChange) {
      kp = kprime_time_change(op, spec->f, K, N, rep.n_prime, grid);
      rep.n_star = kp.n_star;
    } else {
      kp = kprime_general(op, *spec, K, N, rep.n_prime, grid);
    }
    rep.inf_k = kp.inf;
    rep.gap = spectral_gap(discretize_1d(op2, domain));
  }
  const ExtReal Np = rep.n_prime;
  if (!(Np > ExtReal(1.0))) throw std::invalid_argument("Lichnerowicz bound needs N' > 1");
  const double factor = Np.is_pos_inf() ? 1.0 : Np.value() / (Np.value() - 1.0);
  rep.bound = factor * rep.inf_k;
  if (rep.bound.is_neg_inf()) {
    rep.slack = std::numeric_limits<double>::infinity();
    rep.pass = true;
    rep.message = "curvature bound is -inf; the estimate is void";
    return rep;
  }
  const double bound = rep.bound.value();
  rep.slack = rep.gap - bound;
  rep.pass = rep.slack >= -tol * std::max(1.0, std::abs(bound));
  if (bound <= 0.0) rep.message = "curvature bound is not positive; the estimate is trivial";
  return rep;
}

BonnetMyersReport bonnet_myers_check(const DiffusionOperator& op, const Expr& f, const Expr& K,
                                     std::optional<double> k_bound, ExtReal N, ExtReal n_star,
                                     const Domain1D& domain, double tol) {
  require_1d(op);
  validate(domain);
  require_dimension_parameter(N);
  if (!N.is_finite()) throw std::invalid_argument("Bonnet-Myers bound needs a finite N");
  if (!(n_star > N) || n_star < ExtReal(2.0)) throw std::invalid_argument("Bonnet-Myers bound needs N* > N and N* >= 2");
  BonnetMyersReport rep;
  rep.tol = tol;

  const Coefficients1D coef(op);
  const int intervals = 4 * domain.m;
  const double hs = (domain.right - domain.left) / intervals;
  double length = 0.0;
  for (int i = 0; i <= intervals; ++i) {
    const double wgt = (i == 0 || i == intervals) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    length += wgt / std::sqrt(coef.a(domain.left + i * hs));
  }
  length *= hs / 3.0;
  rep.diameter = domain.circle ? 0.5 * length : length;

  const CompiledFunction cf(f, 1), ck(K, 1);
  const int nodes = domain.m;
  const double hn = (domain.right - domain.left) / (nodes - 1);
  double lhs_min = std::numeric_limits<double>::infinity();
  std::optional<double> lhs_arg;
  for (int i = 0; i < nodes; ++i) {
    const Point x{domain.left + i * hn};
    const OperatorJet oj = op.jet(x);
    const FunctionJet fj = cf.jet(x);
    rep.f_max = std::max(rep.f_max, std::abs(fj.value));
    const double gf = gamma_at(oj, fj.grad, fj.grad);
    const double half_lf2 = fj.value * apply_L_at(oj, fj) + gf;
    double v = fj.value * fj.value * ck.value(x) + half_lf2;
    if (gf != 0.0) v = n_star.is_pos_inf() ? -std::numeric_limits<double>::infinity() : v - n_star.value() * gf;
    if (v < lhs_min) {
      lhs_min = v;
      lhs_arg = x[0];
    }
  }
  rep.hypothesis_min = lhs_min;
  rep.k_bound = k_bound.value_or(lhs_min);
  if (!(rep.k_bound > 0.0)) {
    rep.skipped = true;
    rep.pass = true;
    rep.bound = ExtReal::pos_inf();
    rep.message = "K bound is not positive; no diameter estimate";
    return rep;
  }
  const bool lhs_ok = lhs_min >= rep.k_bound - tol * (1.0 + std::abs(rep.k_bound));
  const bool f_ok = rep.f_max <= 1.0 + tol;
  rep.hypothesis_ok = lhs_ok && f_ok;
  if (!lhs_ok) rep.hypothesis_fail_x = lhs_arg;

  const double Nv = N.value();
  const double extra = n_star.is_pos_inf() ? 0.0 : (Nv - 2.0) * (Nv - 2.0) / (n_star.value() - Nv);
  const double b = std::numbers::pi / std::sqrt(rep.k_bound) * std::sqrt(std::max(0.0, Nv - 1.0 + extra));
  rep.bound = b;
  if (!rep.hypothesis_ok) {
    rep.pass = false;
    rep.message = !lhs_ok ? "curvature hypothesis fails on the grid" : "|f| exceeds 1 on the grid";
    return rep;
  }
  rep.pass = rep.diameter <= b * (1.0 + tol);
  if (!rep.pass) rep.message = "diameter exceeds the bound";
  return rep;
}

}  // namespace gammaforge
