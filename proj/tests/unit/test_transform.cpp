#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "gammaforge/models.hpp"
#include "gammaforge/transform.hpp"
#include "support.hpp"

using namespace gammaforge;
using namespace gammaforge::testing;

namespace {

const ExtReal kInf = ExtReal::pos_inf();

std::vector<Point> square_grid(int n, double r, int count) {
  std::vector<Point> g;
  if (n == 1) {
    for (int i = 0; i < count; ++i) g.push_back({-r + 2 * r * i / (count - 1)});
    return g;
  }
  for (int i = 0; i < count; ++i)
    for (int j = 0; j < count; ++j) {
      Point p{-r + 2 * r * i / (count - 1), -r + 2 * r * j / (count - 1)};
      for (int k = 2; k < n; ++k) p.push_back(0.1 * k);
      g.push_back(p);
    }
  return g;
}

Expr minus_half_norm_sq(int n) {
  Expr s(0.0);
  for (int i = 1; i <= n; ++i) s = s + square(Expr::var(i));
  return Expr(-0.5) * s;
}

void check_same_operator(const DiffusionOperator& a, const DiffusionOperator& b, const std::vector<Point>& pts, double tol) {
  const int n = a.dim();
  for (const Point& x : pts)
    for (int i = 0; i < n; ++i) {
      CHECK(std::abs(a.b(i).eval(x) - b.b(i).eval(x)) <= tol * (1 + std::abs(b.b(i).eval(x))));
      for (int j = 0; j < n; ++j) CHECK(std::abs(a.a(i, j).eval(x) - b.a(i, j).eval(x)) <= tol * (1 + std::abs(b.a(i, j).eval(x))));
    }
}

}  // namespace

TEST_CASE("transformed carre du champ is f^2 Gamma") {
  Rng rng(61);
  const auto base = DiffusionOperator::from_strings(2, {{"1 + 0.2*x2^2", "0.1"}, {"0.1", "2"}}, {"x1", "-x2"});
  const Expr f = parse("1.2 + 0.3*sin(x1 + x2)", 2), w = parse("0.2*x1*x2", 2);
  const std::vector<TransformSpec> specs = {
      TransformSpec::time_change(f), TransformSpec::drift(parse("x1^2 - x2", 2)), TransformSpec::metric(f),
      TransformSpec::conformal(w, 3.0), TransformSpec::general(f, {{parse("x2", 2), parse("cos(x1)", 2)}})};
  for (const auto& s : specs) {
    const auto op2 = transform_operator(base, s);
    for (int t = 0; t < 5; ++t) {
      const Expr u = random_polynomial(rng, 2, 3), v = random_polynomial(rng, 2, 2);
      const Point x = random_point(rng, 2);
      const double f2 = std::pow(s.f.eval(x), 2);
      const double lhs = gamma(op2, u, v).eval(x), rhs = f2 * gamma(base, u, v).eval(x);
      CHECK(std::abs(lhs - rhs) <= 1e-10 * (1 + std::abs(rhs)));
    }
  }
}

TEST_CASE("named transformations") {
  const auto e2 = DiffusionOperator::euclidean(2);
  const auto pts = square_grid(2, 1.0, 4);
  check_same_operator(transform_operator(e2, TransformSpec::time_change(Expr(1.0))), e2, pts, 1e-14);
  check_same_operator(transform_operator(e2, TransformSpec::drift(minus_half_norm_sq(2))),
                      DiffusionOperator::ornstein_uhlenbeck(2), pts, 1e-14);

  // Metric: f^2 L + Gamma(f^2, .).
  const Expr f = parse("1 + 0.2*x1*x2", 2);
  const auto ou = DiffusionOperator::ornstein_uhlenbeck(2);
  const auto m = transform_operator(ou, TransformSpec::metric(f));
  Rng rng(62);
  for (int t = 0; t < 5; ++t) {
    const Expr u = random_polynomial(rng, 2, 3);
    const Point x = random_point(rng, 2);
    const double expect = std::pow(f.eval(x), 2) * apply_L(ou, u).eval(x) + gamma(ou, square(f), u).eval(x);
    CHECK(std::abs(apply_L(m, u).eval(x) - expect) <= 1e-10 * (1 + std::abs(expect)));
  }

  // Conformal factor form f^2 L - ((N-2)/2) Gamma(f^2, .) equals the exponential form with f = e^{-w}.
  const Expr w = parse("0.3*x1 - 0.2*x2^2", 2);
  check_same_operator(transform_operator(ou, TransformSpec::conformal(w, 4.0)),
                      transform_operator(ou, TransformSpec::conformal_factor(exp(-w), 4.0)), pts, 1e-12);
  for (int t = 0; t < 5; ++t) {
    const Expr u = random_polynomial(rng, 2, 3);
    const Point x = random_point(rng, 2);
    const Expr ff = exp(-w);
    const double expect = std::pow(ff.eval(x), 2) * apply_L(ou, u).eval(x) - gamma(ou, square(ff), u).eval(x);
    const double got = apply_L(transform_operator(ou, TransformSpec::conformal(w, 4.0)), u).eval(x);
    CHECK(std::abs(got - expect) <= 1e-10 * (1 + std::abs(expect)));
  }
}

TEST_CASE("conformal round trip") {
  Rng rng(63);
  const auto base = DiffusionOperator::from_strings(2, {{"1 + 0.2*x2^2", "0.1"}, {"0.1", "2"}}, {"x1", "-x2"});
  const Expr w = parse("0.3*sin(x1) + 0.1*x1*x2", 2);
  const double N = 3.5;
  const auto op2 = transform_operator(base, TransformSpec::conformal(w, N));
  for (int t = 0; t < 20; ++t) {
    const Point x = random_point(rng, 2);
    const double e2w = std::exp(2 * w.eval(x));
    for (int i = 0; i < 2; ++i) {
      double bi = op2.b(i).eval(x);
      for (int j = 0; j < 2; ++j) {
        CHECK(std::abs(e2w * op2.a(i, j).eval(x) - base.a(i, j).eval(x)) < 1e-9);
        bi -= (N - 2) * op2.a(i, j).eval(x) * w.diff(j + 1).eval(x);
      }
      CHECK(std::abs(e2w * bi - base.b(i).eval(x)) < 1e-9);
    }
  }
}

TEST_CASE("transform domain checks") {
  const auto e1 = DiffusionOperator::euclidean(1);
  const std::vector<Point> pts{{-1.0}, {0.0}, {1.0}};
  CHECK_THROWS_AS(transform_operator(e1, TransformSpec::time_change(Expr::var(1)), pts), DomainError);
  const auto e2 = DiffusionOperator::euclidean(2);
  const std::vector<Point> pts2{{0.1, 0.2}, {-0.5, 0.4}};
  CHECK_NOTHROW(transform_operator(e2, TransformSpec::doob(parse("exp(x1)*cos(x2) + 3", 2)), pts2));
  CHECK_THROWS_AS(transform_operator(e2, TransformSpec::doob(parse("2 + x1^2", 2)), pts2), DomainError);
  CHECK_THROWS_AS(transform_operator(e2, TransformSpec::doob(parse("x1", 2)), pts2), DomainError);
  CHECK_THROWS_AS(TransformSpec::conformal(Expr(0.0), kInf), std::invalid_argument);
}

TEST_CASE("Doob transformation is a drift by 2 log rho") {
  const auto e2 = DiffusionOperator::euclidean(2);
  const Expr rho = parse("2 + x1 - 0.5*x2", 2);
  const auto d = transform_operator(e2, TransformSpec::doob(rho));
  Rng rng(64);
  for (int t = 0; t < 10; ++t) {
    const Expr u = random_polynomial(rng, 2, 3);
    const Point x = random_point(rng, 2, 0.5);
    const double expect = apply_L(e2, rho * u).eval(x) / rho.eval(x);
    CHECK(std::abs(apply_L(d, u).eval(x) - expect) <= 1e-10 * (1 + std::abs(expect)));
  }
}

TEST_CASE("K' of the identity transformation") {
  const auto ou = DiffusionOperator::ornstein_uhlenbeck(2);
  const auto grid = square_grid(2, 1.0, 3);
  const auto r = kprime_general(ou, TransformSpec::general(Expr(1.0), {}), Expr(1.0), kInf, kInf, grid);
  CHECK(r.inf.value() == doctest::Approx(1.0));
  const auto z = kprime_drift(ou, {}, Expr(0.7), 2.0, 5.0, grid);
  CHECK(z.inf.value() == doctest::Approx(0.7));
}

TEST_CASE("time change K'") {
  const auto e2 = DiffusionOperator::euclidean(2);
  const auto grid = square_grid(2, 2.0, 5);
  const auto c = kprime_time_change(e2, Expr(1.5), Expr(0.4), 2.0, 4.0, grid);
  CHECK(c.inf.value() == doctest::Approx(1.5 * 1.5 * 0.4));
  for (double Np : {2.5, 4.0, 100.0}) CHECK(time_change_n_star(2.0, Np) == doctest::Approx(2.0));
  CHECK(time_change_n_star(3.0, 5.0) == doctest::Approx(2 + 1.0 * 3.0 / 2.0));
  CHECK(time_change_n_star(3.0, kInf) == doctest::Approx(3.0));

  const Expr f = parse("1 + 0.25*sin(x1)", 2);
  const auto tc = kprime_time_change(e2, f, Expr(0.0), 2.0, 4.0, grid);
  double expect = INFINITY;
  for (const Point& x : grid) {
    const double v = 0.5 * apply_L(e2, square(f)).eval(x) - 2.0 * gamma(e2, f, f).eval(x);
    expect = std::min(expect, v);
  }
  CHECK(tc.inf.value() == doctest::Approx(expect).epsilon(1e-12));
  const auto gen = kprime_general(e2, TransformSpec::time_change(f), Expr(0.0), 2.0, 4.0, grid);
  CHECK(std::abs(gen.inf.value() - tc.inf.value()) < 1e-9);
  for (std::size_t i = 0; i < grid.size(); ++i)
    CHECK(std::abs(gen.points[i].value.value() - tc.points[i].value.value()) < 1e-9);
  CHECK_THROWS_AS(kprime_time_change(e2, f, Expr(0.0), 3.0, 3.0, grid), std::invalid_argument);
  CHECK_THROWS_AS(kprime_time_change(e2, f, Expr(0.0), 3.0, 2.0, grid), std::invalid_argument);
}

TEST_CASE("drift K'") {
  for (int n : {1, 2}) {
    const auto e = DiffusionOperator::euclidean(n);
    const auto grid = square_grid(n, 1.5, 5);
    const std::vector<TransformPair> Z{{Expr(1.0), minus_half_norm_sq(n)}};
    CHECK(kprime_drift(e, Z, Expr(0.0), double(n), kInf, grid).inf.value() == doctest::Approx(1.0));
  }
  const auto e1 = DiffusionOperator::euclidean(1);
  const auto grid = square_grid(1, 1.5, 7);
  const auto r = kprime_drift(e1, {{Expr(1.0), minus_half_norm_sq(1)}}, Expr(0.0), 1.0, 2.0, grid);
  CHECK(r.inf.value() == doctest::Approx(1 - 1.5 * 1.5));

  const auto ou = DiffusionOperator::ornstein_uhlenbeck(2);
  const auto g2 = square_grid(2, 1.0, 4);
  const Expr h = parse("0.3*x1^2*x2 + sin(x2)", 2);
  const auto dedicated = kprime_drift(ou, {{Expr(1.0), h}}, Expr(1.0), 3.0, 6.0, g2);
  const auto general = kprime_general(ou, TransformSpec::drift(h), Expr(1.0), 3.0, 6.0, g2);
  CHECK(std::abs(dedicated.inf.value() - general.inf.value()) < 1e-9);
  CHECK_THROWS_AS(kprime_drift(ou, {{Expr(1.0), h}}, Expr(1.0), 3.0, 3.0, g2), std::invalid_argument);
  CHECK_NOTHROW(kprime_drift(ou, {{Expr(1.0), h}}, Expr(1.0), kInf, kInf, g2));
}

TEST_CASE("conformal Ricci identity") {
  Rng rng(65);
  const auto e2 = DiffusionOperator::euclidean(2);
  const auto grid2 = square_grid(2, 1.0, 5);
  const Expr u = random_polynomial(rng, 2, 3);
  const auto zero = conformal_ricci_identity(e2, Expr(0.0), 2.0, u, grid2);
  CHECK(zero.ok);
  CHECK(zero.max_scaled_residual < 1e-12);

  const Expr w = random_polynomial(rng, 2, 3, 0.3);
  const auto rep = conformal_ricci_identity(e2, w, 2.0, u, grid2);
  CHECK(rep.ok);
  for (const auto& p : rep.points) {
    const double expect = -std::exp(-4 * w.eval(p.x)) * apply_L(e2, w).eval(p.x) * gamma(e2, u, u).eval(p.x);
    CHECK(std::abs(p.lhs.value() - expect) <= 1e-7 * (1 + std::abs(expect)));
  }

  const auto e3 = DiffusionOperator::euclidean(3);
  std::vector<Point> grid3;
  for (int i = 0; i < 30; ++i) grid3.push_back(random_point(rng, 3));
  const auto r3 = conformal_ricci_identity(e3, parse("0.1*x1*x2", 3), 3.0, random_polynomial(rng, 3, 3), grid3);
  CHECK(r3.ok);
  CHECK(r3.max_scaled_residual < 1e-7);
}

TEST_CASE("conformal K'") {
  const auto e2 = DiffusionOperator::euclidean(2);
  const auto grid = square_grid(2, 0.6, 5);
  CHECK(conformal_kprime(e2, Expr(2.0), Expr(0.3), 3.0, grid).inf.value() == doctest::Approx(1.2));

  const auto ou = DiffusionOperator::ornstein_uhlenbeck(2);
  const Expr f = parse("1 + 0.2*x1 - 0.1*x2^2", 2);
  const auto r = conformal_kprime(ou, f, Expr(1.0), 2.0, grid);
  double expect = INFINITY;
  for (const Point& x : grid) {
    const double fv = f.eval(x);
    expect = std::min(expect, fv * fv + fv * apply_L(ou, f).eval(x) - gamma(ou, f, f).eval(x));
  }
  CHECK(r.inf.value() == doctest::Approx(expect).epsilon(1e-12));

  // Euclidean plane to the hyperbolic disc.
  const Expr ball = parse("0.5*(1 - x1^2 - x2^2)", 2);
  const auto hk = conformal_kprime(e2, ball, Expr(0.0), 2.0, grid);
  CHECK(hk.inf.value() >= -(1 + 1e-9));
  const auto disc = transform_operator(e2, TransformSpec::conformal_factor(ball, 2.0), grid);
  CHECK(check_be(disc, Expr(hk.inf.value()), 2.0, grid).pass);

  const auto general = kprime_general(ou, TransformSpec::conformal_factor(f, 3.0), Expr(1.0), 3.0, 3.0, grid);
  const auto dedicated = conformal_kprime(ou, f, Expr(1.0), 3.0, grid);
  CHECK(std::abs(general.inf.value() - dedicated.inf.value()) < 1e-9);
}

TEST_CASE("conformal transformations approach drift transformations") {
  const auto e2 = DiffusionOperator::euclidean(2);
  const auto grid = square_grid(2, 1.0, 5);
  const Expr v = parse("0.3*sin(x1) + 0.2*x1*x2", 2);
  const double drift = kprime_drift(e2, {{Expr(1.0), v}}, Expr(0.0), kInf, kInf, grid).inf.value();
  std::vector<double> vals;
  for (double N : {1e2, 1e3, 1e4}) vals.push_back(conformal_kprime(e2, exp(Expr(-1.0 / (N - 2)) * v), Expr(0.0), N, grid).inf.value());
  const double d1 = std::abs(vals[1] - vals[0]), d2 = std::abs(vals[2] - vals[1]);
  CHECK(d2 < d1);
  CHECK(std::abs(vals[2] - drift) < std::abs(vals[0] - drift));
  CHECK(std::abs(vals[2] - drift) < 1e-2);
}

TEST_CASE("Riemannian conformal Ricci law") {
  Rng rng(66);
  const int n = 3;
  const auto e3 = DiffusionOperator::euclidean(n);
  const Expr w = parse("0.2*x1*x2 - 0.1*x3^2 + 0.15*sin(x2)", n);
  const auto op2 = transform_operator(e3, TransformSpec::conformal(w, double(n)));
  for (int t = 0; t < 10; ++t) {
    const Point x = random_point(rng, n);
    Matrix D2(n, n);
    Vector dw(n);
    for (int i = 0; i < n; ++i) {
      dw(i) = w.diff(i + 1).eval(x);
      for (int j = 0; j < n; ++j) D2(i, j) = w.diff(i + 1).diff(j + 1).eval(x);
    }
    const Matrix ric = -(n - 2.0) * (D2 - dw * dw.transpose()) -
                       (D2.trace() + (n - 2.0) * dw.squaredNorm()) * Matrix::Identity(n, n);
    const Matrix expect = std::exp(-4 * w.eval(x)) * ric;
    const RicciForm form = ricci_form_matrix(op2, x, double(n));
    CHECK((form.M - expect).norm() <= 1e-6 * (1 + expect.norm()));
  }
}

TEST_CASE("transformation bound") {
  Rng rng(67);
  const auto ou = DiffusionOperator::ornstein_uhlenbeck(2);
  const auto grid = square_grid(2, 0.8, 3);
  std::vector<Expr> us;
  for (int i = 0; i < 3; ++i) us.push_back(random_polynomial(rng, 2, 3));

  const auto id = verify_transform_bound(ou, TransformSpec::general(Expr(1.0), {}), kInf, kInf, us, grid);
  CHECK(id.ok);
  for (const auto& r : id.records) CHECK(std::abs(r.residual) <= 1e-9 * r.scale);

  const Expr w = parse("0.2*x1 - 0.1*x1*x2", 2);
  const auto tc = verify_transform_bound(ou, TransformSpec::time_change_exp(w), 3.0, 5.0, us, grid);
  CHECK(tc.ok);
  CHECK(tc.max_alternative_gap <= 1e-7);
  REQUIRE_FALSE(tc.records.empty());
  CHECK(tc.records.front().rhs_alternative.has_value());

  const auto e2 = DiffusionOperator::euclidean(2);
  const Expr h = parse("0.3*x1^2 - 0.2*x1*x2 + 0.1*sin(x2)", 2);
  const auto eq = verify_transform_bound(e2, TransformSpec::drift(h), kInf, kInf, us, grid);
  CHECK(eq.ok);
  for (const auto& r : eq.records) {
    CHECK(std::abs(r.residual) <= 1e-8 * r.scale);
    // R'(u) = R(u) - H_h(u,u) on flat space.
    const Matrix H = hessian_matrix(e2, h, r.x);
    Vector du(2);
    for (int i = 0; i < 2; ++i) du(i) = us[r.u_index].diff(i + 1).eval(r.x);
    CHECK(std::abs(r.lhs.value() + du.dot(H * du)) <= 1e-8 * r.scale);
  }
  const auto ineq = verify_transform_bound(e2, TransformSpec::drift(h), 2.0, 4.0, us, grid);
  CHECK(ineq.ok);
  CHECK_THROWS_AS(verify_transform_bound(e2, TransformSpec::drift(h), 3.0, 3.0, us, grid), std::invalid_argument);
  CHECK_THROWS_AS(verify_transform_bound(e2, TransformSpec::time_change(parse("2 + sin(x1)", 2)), kInf, kInf, us, grid),
                  std::invalid_argument);
}

TEST_CASE("measure and metric change") {
  const auto e2 = DiffusionOperator::euclidean(2);
  const auto grid = square_grid(2, 1.0, 5);
  const auto trivial = mms_kprime(e2, Expr(0.0), Expr(0.0), Expr(0.5), kInf, kInf, grid);
  CHECK(trivial.value.inf.value() == doctest::Approx(0.5));

  const Expr v = parse("-0.5*(x1^2 + x2^2) + 0.2*x1*x2", 2);
  const auto drift_only = mms_kprime(e2, v, Expr(0.0), Expr(0.0), kInf, kInf, grid);
  const auto drift = kprime_drift(e2, {{Expr(1.0), v}}, Expr(0.0), kInf, kInf, grid);
  CHECK(std::abs(drift_only.value.inf.value() - drift.inf.value()) < 1e-9);

  const Expr w = parse("0.1*sin(x1)", 2);
  const auto nm = mms_kprime(e2, Expr(0.0), w, Expr(0.0), 2.0, 4.0, grid);
  REQUIRE(nm.no_measure);
  CHECK(std::abs(nm.no_measure->inf.value() - nm.value.inf.value()) < 1e-9);
  const auto gen = kprime_general(e2, TransformSpec::general(exp(-w), {{exp(-w), Expr(-2.0) * w}}), Expr(0.0), 2.0, 4.0, grid);
  CHECK(std::abs(gen.inf.value() - nm.value.inf.value()) < 1e-9);

  CHECK_THROWS_AS(mms_kprime(e2, v, w, Expr(0.0), 3.0, 3.0, grid), std::invalid_argument);
  CHECK_THROWS_AS(mms_kprime(e2, v, w, Expr(0.0), kInf, kInf, grid), std::invalid_argument);
  CHECK_NOTHROW(mms_kprime(e2, Expr(3.0) * w, w, Expr(0.0), 3.0, 3.0, grid));
}

TEST_CASE("constant falsifier") {
  FalsifierOptions opts;
  opts.trials = 2000;
  opts.functions = 20;
  opts.seed = 7;
  const auto a = wrong_constants_falsifier(3, 3.0, opts);
  const auto b = wrong_constants_falsifier(3, 3.0, opts);
  REQUIRE(a.pairs.size() == 3);
  CHECK(a.pairs[0].pair.c1 == doctest::Approx(-1.0));
  CHECK(a.pairs[0].pair.c2 == doctest::Approx(1.0));
  CHECK(a.pairs[0].violations == 0);
  CHECK(a.pairs[2].violations > 0);
  REQUIRE(a.pairs[2].witness);
  CHECK(a.pairs[2].witness->residual < -1e-6);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(a.pairs[i].violations == b.pairs[i].violations);
    CHECK(a.pairs[i].min_residual == b.pairs[i].min_residual);
  }
  CHECK_THROWS_AS(wrong_constants_falsifier(3, 0.5, opts), std::invalid_argument);
}
