#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <numbers>

#include "gammaforge/models.hpp"
#include "gammaforge/spectral.hpp"

using namespace gammaforge;

namespace {

constexpr double kPi = std::numbers::pi;
const double kEps = 1e-3;

Domain1D interval(double l, double r, int m) { return Domain1D{l, r, false, m}; }

}  // namespace

TEST_CASE("circle spectrum") {
  const auto e1 = DiffusionOperator::euclidean(1);
  const auto d = discretize_1d(e1, Domain1D{0.0, 2 * kPi, true, 256});
  const auto ev = spectrum(d);
  CHECK(std::abs(ev[0]) < 1e-10);
  const double expect[] = {1, 1, 4, 4, 9, 9};
  for (int i = 0; i < 6; ++i) CHECK(ev[i + 1] == doctest::Approx(expect[i]).epsilon(1e-3));
  CHECK(spectral_gap(d) == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("Ornstein-Uhlenbeck and sphere gaps") {
  const auto ou = DiffusionOperator::ornstein_uhlenbeck(1);
  CHECK(spectral_gap(discretize_1d(ou, interval(-8, 8, 512))) == doctest::Approx(1.0).epsilon(1e-3));
  const auto sphere = sphere_radial(3);
  CHECK(spectral_gap(discretize_1d(sphere, interval(kEps, kPi - kEps, 512))) == doctest::Approx(3.0).epsilon(1e-2));
}

TEST_CASE("discretization invariants") {
  const auto ou = DiffusionOperator::ornstein_uhlenbeck(1);
  const auto drifted = DiffusionOperator::from_strings(1, {{"1 + 0.5*sin(x1)^2"}}, {"cos(x1)"});
  for (const auto& [op, dom] : {std::pair{ou, interval(-6, 6, 200)}, std::pair{sphere_radial(3), interval(kEps, kPi - kEps, 200)},
                                std::pair{drifted, Domain1D{0, 2 * kPi, true, 128}}}) {
    const auto d = discretize_1d(op, dom);
    CHECK(d.symmetry_residual <= 1e-10);
    CHECK(d.row_sum_residual <= 1e-10);
    CHECK(d.weights.sum() == doctest::Approx(1.0));
    CHECK(d.weights.minCoeff() > 0.0);
    const Vector ones = Vector::Ones(d.matrix.rows());
    CHECK((d.matrix * ones).cwiseAbs().maxCoeff() <= 1e-10 * d.matrix.diagonal().cwiseAbs().maxCoeff());
    const Vector inv = d.weights.transpose() * d.matrix;
    CHECK(inv.cwiseAbs().maxCoeff() <= 1e-10 * d.matrix.diagonal().cwiseAbs().maxCoeff());
    for (double v : spectrum(d)) CHECK(v >= -1e-8);
  }
}

TEST_CASE("second-order convergence") {
  const auto ou = DiffusionOperator::ornstein_uhlenbeck(1);
  const auto sphere = sphere_radial(3);
  const auto e1 = DiffusionOperator::euclidean(1);
  const std::vector<std::pair<DiffusionOperator, Domain1D>> cases = {
      {ou, interval(-8, 8, 64)}, {sphere, interval(kEps, kPi - kEps, 64)}, {e1, Domain1D{0, 2 * kPi, true, 16}}};
  for (const auto& [op, dom] : cases) {
    std::vector<double> gaps;
    for (int k = 0; k < 3; ++k) {
      Domain1D d = dom;
      d.m = dom.m * (1 << k);
      if (!d.circle) d.m = (dom.m - 1) * (1 << k) + 1;
      gaps.push_back(spectral_gap(discretize_1d(op, d)));
    }
    const double r = std::abs(gaps[0] - gaps[1]) / std::abs(gaps[1] - gaps[2]);
    CHECK(r > 3.5);
  }
}

TEST_CASE("discretization errors") {
  const auto bad = DiffusionOperator::from_strings(1, {{"x1"}}, {"0"});
  CHECK_THROWS_AS(discretize_1d(bad, interval(-1, 1, 16)), DomainError);
  CHECK_THROWS_AS(discretize_1d(DiffusionOperator::euclidean(2), interval(0, 1, 16)), DimensionError);
  CHECK_THROWS_AS(discretize_1d(DiffusionOperator::euclidean(1), interval(1, 0, 16)), std::invalid_argument);
  const auto nonrev = DiffusionOperator::from_strings(1, {{"1"}}, {"1"});
  CHECK_THROWS_AS(discretize_1d(nonrev, Domain1D{0, 2 * kPi, true, 64}), DomainError);
}

TEST_CASE("Lichnerowicz bound") {
  const auto sphere = sphere_radial(3);
  const auto s = lichnerowicz_check(sphere, Expr(2.0), 3.0, std::nullopt, std::nullopt, interval(kEps, kPi - kEps, 512));
  CHECK(s.pass);
  CHECK(s.bound.value() == doctest::Approx(3.0));
  CHECK(s.gap == doctest::Approx(3.0).epsilon(1e-2));
  CHECK(std::abs(s.slack) <= 1e-2 * 3.0);

  const auto ou = DiffusionOperator::ornstein_uhlenbeck(1);
  const auto o = lichnerowicz_check(ou, Expr(1.0), ExtReal::pos_inf(), std::nullopt, std::nullopt, interval(-8, 8, 512));
  CHECK(o.pass);
  CHECK(o.bound.value() == doctest::Approx(1.0));
  CHECK(o.gap == doctest::Approx(1.0).epsilon(5e-3));

  const auto tc = lichnerowicz_check(ou, parse("1 - x1^2/99", 1), 100.0, TransformSpec::time_change(parse("1 + 0.1*sin(x1)", 1)),
                                     ExtReal::pos_inf(), interval(-8, 8, 256));
  CHECK(tc.pass);
  CHECK(tc.slack >= 0.0);
  CHECK(tc.n_star.has_value());

  CHECK_THROWS_AS(lichnerowicz_check(ou, Expr(1.0), 3.0, std::nullopt, ExtReal(4.0), interval(-8, 8, 64)), std::invalid_argument);
}

TEST_CASE("Bonnet-Myers bound") {
  const auto sphere = sphere_radial(3);
  const auto dom = interval(kEps, kPi - kEps, 512);
  const auto classic = bonnet_myers_check(sphere, Expr(1.0), Expr(2.0), std::nullopt, 3.0, 1e12, dom);
  CHECK(classic.pass);
  CHECK(classic.hypothesis_ok);
  CHECK(classic.diameter == doctest::Approx(kPi - 2 * kEps));
  CHECK(classic.bound.value() == doctest::Approx(kPi).epsilon(1e-6));

  const auto weighted = bonnet_myers_check(sphere, parse("1 - 0.05*sin(x1)^2", 1), Expr(2.0), std::nullopt, 3.0, 5.0, dom);
  CHECK(weighted.hypothesis_ok);
  CHECK(weighted.pass);
  CHECK(weighted.bound.value() >= kPi);

  const auto flat = bonnet_myers_check(DiffusionOperator::euclidean(1), Expr(1.0), Expr(0.0), std::nullopt, 3.0, 5.0,
                                       interval(0, 10, 64));
  CHECK(flat.skipped);
  CHECK(flat.pass);

  const auto fail = bonnet_myers_check(sphere, Expr(1.0), Expr(2.0), 2.5, 3.0, 1e12, dom);
  CHECK_FALSE(fail.hypothesis_ok);
  CHECK_FALSE(fail.pass);
  CHECK(fail.hypothesis_fail_x.has_value());

  const auto big = bonnet_myers_check(sphere, Expr(1.5), Expr(2.0), std::nullopt, 3.0, 1e12, dom);
  CHECK_FALSE(big.hypothesis_ok);

  CHECK_THROWS_AS(bonnet_myers_check(sphere, Expr(1.0), Expr(2.0), std::nullopt, 3.0, 2.5, dom), std::invalid_argument);
}
