#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "gammaforge/curvature.hpp"

namespace gammaforge {

enum class TransformKind { General, TimeChange, Drift, Metric, Conformal, Doob };

std::string to_string(TransformKind kind);
TransformKind transform_kind_from_string(const std::string& name);

struct TransformPair {
  Expr g;
  Expr h;
};

/// L'u = f^2 Lu + f sum_i g_i Gamma(h_i, u).
struct TransformSpec {
  TransformKind kind = TransformKind::General;
  Expr f = Expr(1.0);
  std::vector<TransformPair> pairs;
  std::optional<Expr> w;
  std::optional<Expr> rho;
  std::optional<ExtReal> N;

  static TransformSpec general(const Expr& f, std::vector<TransformPair> pairs);
  static TransformSpec time_change(const Expr& f);
  /// Time change with f = e^{-w}; w is kept for the exponential reformulation.
  static TransformSpec time_change_exp(const Expr& w);
  /// L' = L + Gamma(h, .)
  static TransformSpec drift(const Expr& h);
  /// L' = L + sum_i g_i Gamma(h_i, .)
  static TransformSpec vector_drift(std::vector<TransformPair> pairs);
  /// L' = f^2 L + Gamma(f^2, .)
  static TransformSpec metric(const Expr& f);
  /// L' = e^{-2w}(L + (N-2) Gamma(w, .)), i.e. f = e^{-w}, g = -(N-2), h = f.
  static TransformSpec conformal(const Expr& w, ExtReal N);
  /// L' = f^2 L - ((N-2)/2) Gamma(f^2, .)
  static TransformSpec conformal_factor(const Expr& f, ExtReal N);
  /// L'u = (1/rho) L(rho u) for L-harmonic rho > 0.
  static TransformSpec doob(const Expr& rho);
};

/// Builds L'. Positivity of f (and L rho = 0, rho > 0 for Doob) is checked
/// at the given points; violations throw DomainError.
DiffusionOperator transform_operator(const DiffusionOperator& op, const TransformSpec& spec,
                                     const std::vector<Point>& check_points = {}, double tol = 1e-8);

struct KPrimePoint {
  Point x;
  ExtReal value;
};

struct KPrimeResult {
  ExtReal inf = ExtReal::pos_inf();
  std::size_t argmin = 0;
  std::vector<KPrimePoint> points;
  /// Effective N* for the time change formula.
  std::optional<double> n_star;
};

/// K' for BE(K', N') of L' given BE(K, N) of L; K may be a field.
KPrimeResult kprime_general(const DiffusionOperator& op, const TransformSpec& spec, const Expr& K, ExtReal N,
                            ExtReal Nprime, const std::vector<Point>& grid);
KPrimeResult kprime_time_change(const DiffusionOperator& op, const Expr& f, const Expr& K, ExtReal N, ExtReal Nprime,
                                const std::vector<Point>& grid);
double time_change_n_star(ExtReal N, ExtReal Nprime);
KPrimeResult kprime_drift(const DiffusionOperator& op, const std::vector<TransformPair>& Z, const Expr& K, ExtReal N,
                          ExtReal Nprime, const std::vector<Point>& grid);
KPrimeResult conformal_kprime(const DiffusionOperator& op, const Expr& f, const Expr& K, ExtReal N,
                              const std::vector<Point>& grid);

struct MmsKPrime {
  KPrimeResult value;
  /// Pure metric form in terms of f = e^{-w}; present when v is 0.
  std::optional<KPrimeResult> no_measure;
};
MmsKPrime mms_kprime(const DiffusionOperator& op, const Expr& v, const Expr& w, const Expr& K, ExtReal N,
                     ExtReal Nprime, const std::vector<Point>& grid);

struct IdentityPoint {
  Point x;
  ExtReal lhs;
  ExtReal rhs;
  double residual = 0.0;
  double scale = 1.0;
};

struct IdentityReport {
  std::vector<IdentityPoint> points;
  double max_scaled_residual = 0.0;
  double tol = 1e-7;
  bool ok = true;
  std::vector<std::size_t> skipped;
};

/// Direct N-Ricci tensor of e^{-2w}(L + (N-2)Gamma(w,.)) against the
/// closed conformal law assembled from L.
IdentityReport conformal_ricci_identity(const DiffusionOperator& op, const Expr& w, ExtReal N, const Expr& u,
                                        const std::vector<Point>& grid, double tol = 1e-7);

struct BoundRecord {
  Point x;
  std::size_t u_index = 0;
  ExtReal lhs;
  ExtReal rhs;
  double residual = 0.0;
  double scale = 1.0;
  std::optional<double> rhs_alternative;
};

struct BoundReport {
  std::vector<BoundRecord> records;
  double min_scaled_residual = std::numeric_limits<double>::infinity();
  double max_alternative_gap = 0.0;
  double tol = 1e-7;
  bool ok = true;
  std::vector<Point> skipped;
};

/// R'_{N'}(u) computed on L' against the lower bound assembled from L.
BoundReport verify_transform_bound(const DiffusionOperator& op, const TransformSpec& spec, ExtReal N, ExtReal Nprime,
                                   const std::vector<Expr>& u_tests, const std::vector<Point>& grid,
                                   double tol = 1e-7);

struct ConstantPair {
  double c1 = 0.0;
  double c2 = 0.0;
};

struct FalsifierWitness {
  std::vector<double> w_coefficients;
  std::vector<double> u_coefficients;
  Point x;
  std::string w;
  std::string u;
  double residual = 0.0;
};

struct FalsifierPairResult {
  ConstantPair pair;
  std::size_t violations = 0;
  double min_residual = std::numeric_limits<double>::infinity();
  std::optional<FalsifierWitness> witness;
};

struct FalsifierReport {
  int n = 0;
  double N = 0.0;
  std::size_t trials = 0;
  std::uint64_t seed = 0;
  double threshold = 1e-6;
  std::vector<FalsifierPairResult> pairs;
};

struct FalsifierOptions {
  std::size_t trials = 10000;
  std::size_t functions = 100;
  std::uint64_t seed = 20240611;
  double threshold = 1e-6;
};

/// Random search on Euclidean R^n for violations of
/// G2~(u) - (1/N)(L~u)^2 >= e^{-4w}[-Lw G(u) + c1 G(w)G(u) - (N-2)H_w(u,u) + c2 G(w,u)^2].
/// Pairs default to the correct one followed by the two historical ones.
FalsifierReport wrong_constants_falsifier(int n, double N, const FalsifierOptions& opts = {},
                                          std::vector<ConstantPair> pairs = {});

}  // namespace gammaforge
