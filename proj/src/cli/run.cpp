#include <cmath>
#include <map>
#include <set>

#include "gammaforge/cli.hpp"

namespace gammaforge::cli {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

const std::map<std::string, double>& default_tolerances() {
  static const std::map<std::string, double> t = {
      {"gamma", 1e-9},        {"gamma2", 1e-8},       {"hessian", 1e-9},          {"ricci", 1e-5},
      {"check-be", 1e-8},     {"best-k", 1e-8},       {"transform", 1e-9},        {"verify-conformal", 1e-7},
      {"verify-bound", 1e-7}, {"falsify-constants", 1e-6}, {"spectral-gap", 1e-10}, {"lichnerowicz", 1e-2},
      {"bonnet-myers", 1e-3}, {"mms-kprime", 1e-9}};
  return t;
}

class Params {
 public:
  Params(const json& doc, const std::set<std::string>& allowed, int dim) : doc_(doc), dim_(dim) {
    for (const auto& [key, _] : doc.items())
      if (!allowed.count(key)) throw UsageError("params." + key, "unknown field for this command");
  }

  bool has(const std::string& key) const { return doc_.contains(key); }

  Expr expr(const std::string& key) const {
    if (!has(key)) throw UsageError("params." + key, "missing");
    return to_expr(doc_[key], "params." + key);
  }
  Expr expr_or(const std::string& key, const Expr& fallback) const { return has(key) ? expr(key) : fallback; }

  std::vector<Expr> exprs(const std::string& key) const {
    const json& d = doc_[key];
    if (!d.is_array() || d.empty()) throw UsageError("params." + key, "expected a nonempty array");
    std::vector<Expr> out;
    for (std::size_t i = 0; i < d.size(); ++i)
      out.push_back(to_expr(d[i], "params." + key + "[" + std::to_string(i) + "]"));
    return out;
  }

  ExtReal ext(const std::string& key) const {
    if (!has(key)) throw UsageError("params." + key, "missing");
    const json& d = doc_[key];
    if (d.is_number()) return ExtReal(d.get<double>());
    if (d.is_string()) {
      try {
        return ExtReal::parse(d.get<std::string>());
      } catch (const std::exception&) {
      }
    }
    throw UsageError("params." + key, "expected a number, \"inf\" or \"-inf\"");
  }
  std::optional<ExtReal> ext_opt(const std::string& key) const {
    return has(key) ? std::optional<ExtReal>(ext(key)) : std::nullopt;
  }

  double number(const std::string& key) const {
    if (!has(key) || !doc_[key].is_number()) throw UsageError("params." + key, "expected a number");
    return doc_[key].get<double>();
  }
  std::optional<double> number_opt(const std::string& key) const {
    return has(key) ? std::optional<double>(number(key)) : std::nullopt;
  }

  long long integer(const std::string& key, long long fallback) const {
    if (!has(key)) return fallback;
    if (!doc_[key].is_number_integer()) throw UsageError("params." + key, "expected an integer");
    return doc_[key].get<long long>();
  }

  bool flag(const std::string& key) const {
    if (!has(key)) return false;
    if (!doc_[key].is_boolean()) throw UsageError("params." + key, "expected a boolean");
    return doc_[key].get<bool>();
  }

 private:
  Expr to_expr(const json& d, const std::string& path) const {
    std::string text;
    if (d.is_string())
      text = d.get<std::string>();
    else if (d.is_number())
      text = format_real(d.get<double>());
    else
      throw UsageError(path, "expected an expression string or a number");
    try {
      return parse(text, dim_);
    } catch (const ParseError& e) {
      throw UsageError(path, e.what());
    }
  }

  const json& doc_;
  int dim_;
};

/// Per-point rows kept in step for the JSON report and the CSV table.
class Rows {
 public:
  explicit Rows(std::vector<std::string> columns) : columns_(std::move(columns)) {}

  void add(std::vector<json> cells) {
    json rec = json::object();
    std::vector<std::string> csv;
    for (std::size_t i = 0; i < columns_.size(); ++i) {
      rec[columns_[i]] = cells[i];
      csv.push_back(cell_text(cells[i]));
    }
    json_.push_back(std::move(rec));
    csv_.push_back(std::move(csv));
  }

  json points() const { return json_.is_null() ? json::array() : json_; }
  CsvTable table() const { return CsvTable{columns_, csv_}; }

 private:
  static std::string cell_text(const json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    if (v.is_number_integer() || v.is_number_unsigned()) return v.dump();
    if (v.is_number()) return format_real(v.get<double>());
    if (v.is_null()) return "";
    if (v.is_array()) {
      std::string s;
      for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ";" : "") + cell_text(v[i]);
      return s;
    }
    return v.dump();
  }

  std::vector<std::string> columns_;
  json json_;
  std::vector<std::vector<std::string>> csv_;
};

struct Outcome {
  bool pass = true;
  json summary = json::object();
  json points = json::array();
  CsvTable table;
};

json point_json(const Point& x) {
  json a = json::array();
  for (double v : x) a.push_back(v);
  return a;
}

std::vector<std::string> coord_columns(int n) {
  std::vector<std::string> c;
  for (int i = 1; i <= n; ++i) c.push_back("x" + std::to_string(i));
  return c;
}

std::vector<json> coord_cells(const Point& x) {
  std::vector<json> c;
  for (double v : x) c.push_back(v);
  return c;
}

template <class... T>
std::vector<std::string> columns(int n, T... extra) {
  auto c = coord_columns(n);
  (c.push_back(extra), ...);
  return c;
}

template <class... T>
std::vector<json> cells(const Point& x, T... extra) {
  auto c = coord_cells(x);
  (c.push_back(json(extra)), ...);
  return c;
}

double scaled(double a, double b) { return std::abs(a - b) / (1.0 + std::abs(a) + std::abs(b)); }

struct Context {
  const JobSpec& job;
  double tol;

  DiffusionOperator op() const {
    if (job.operator_doc.is_null()) throw UsageError("operator", "missing");
    return build_operator(job.operator_doc);
  }
  std::vector<Point> grid() const {
    if (!job.grid) throw UsageError("grid", "missing");
    return grid_expand(*job.grid);
  }
  Domain1D domain() const {
    if (!job.domain) throw UsageError("domain", "missing");
    return *job.domain;
  }
  TransformSpec transform(int dim) const {
    if (job.transform_doc.is_null()) throw UsageError("transform", "missing");
    return build_transform(job.transform_doc, dim);
  }
  void no_transform() const {
    if (!job.transform_doc.is_null()) throw UsageError("transform", "not used by this command");
  }
  void no_domain() const {
    if (job.domain) throw UsageError("domain", "not used by this command");
  }
  void no_grid() const {
    if (job.grid) throw UsageError("grid", "not used by this command");
  }
};

Outcome cmd_gamma(const Context& c) {
  c.no_transform();
  c.no_domain();
  const auto op = c.op();
  const int n = op.dim();
  const Params P(c.job.params, {"u", "v"}, n);
  const Expr u = P.expr("u"), v = P.expr_or("v", u);
  const Tape tape({gamma(op, u, v), carre_du_champ(op, u, v)});
  Rows rows(columns(n, "gamma", "coordinate", "residual"));
  Outcome o;
  double worst = 0.0, lo = kInf, hi = -kInf;
  for (const Point& x : c.grid()) {
    const auto val = tape.eval(x);
    const double r = scaled(val[0], val[1]);
    worst = std::max(worst, r);
    lo = std::min(lo, val[0]);
    hi = std::max(hi, val[0]);
    rows.add(cells(x, val[0], val[1], r));
  }
  o.pass = worst <= c.tol;
  o.summary = {{"min", lo}, {"max", hi}, {"max_residual", worst}};
  o.points = rows.points();
  o.table = rows.table();
  return o;
}

Outcome cmd_gamma2(const Context& c) {
  c.no_transform();
  c.no_domain();
  const auto op = c.op();
  const int n = op.dim();
  const Params P(c.job.params, {"u", "v"}, n);
  const Expr u = P.expr("u"), v = P.expr_or("v", u);
  const Tape tape({gamma2(op, u, v)});
  const CompiledFunction cu(u, n), cv(v, n);
  Rows rows(columns(n, "gamma2", "local", "residual"));
  Outcome o;
  double worst = 0.0, lo = kInf, hi = -kInf;
  for (const Point& x : c.grid()) {
    const double s = tape.eval(x)[0];
    const double l = gamma2_at(op.jet(x), cu.jet(x), cv.jet(x));
    const double r = scaled(s, l);
    worst = std::max(worst, r);
    lo = std::min(lo, s);
    hi = std::max(hi, s);
    rows.add(cells(x, s, l, r));
  }
  o.pass = worst <= c.tol;
  o.summary = {{"min", lo}, {"max", hi}, {"max_residual", worst}};
  o.points = rows.points();
  o.table = rows.table();
  return o;
}

Outcome cmd_hessian(const Context& c) {
  c.no_transform();
  c.no_domain();
  const auto op = c.op();
  const int n = op.dim();
  const Params P(c.job.params, {"f", "g", "h"}, n);
  const Expr f = P.expr("f"), g = P.expr("g"), h = P.expr_or("h", g);
  const Tape tape({hessian(op, f, g, h)});
  const CompiledFunction cf(f, n), cg(g, n), ch(h, n);
  Rows rows(columns(n, "hessian", "matrix_form", "residual", "matrix"));
  Outcome o;
  double worst = 0.0;
  for (const Point& x : c.grid()) {
    const double s = tape.eval(x)[0];
    const Matrix M = hessian_matrix_at(op.jet(x), cf.jet(x));
    const double mform = cg.jet(x).grad.dot(M * ch.jet(x).grad);
    const double r = scaled(s, mform);
    worst = std::max(worst, r);
    json mat = json::array();
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) mat.push_back(M(i, j));
    rows.add(cells(x, s, mform, r, mat));
  }
  o.pass = worst <= c.tol;
  o.summary = {{"max_residual", worst}};
  o.points = rows.points();
  o.table = rows.table();
  return o;
}

Outcome cmd_ricci(const Context& c) {
  c.no_transform();
  c.no_domain();
  const auto op = c.op();
  const int n = op.dim();
  const Params P(c.job.params, {"f", "N", "oracle", "restarts"}, n);
  const Expr f = P.expr("f");
  const ExtReal N = P.ext("N");
  require_dimension_parameter(N);
  const bool oracle = P.flag("oracle");
  OracleOptions opts;
  opts.seed = c.job.seed;
  opts.restarts = static_cast<int>(P.integer("restarts", opts.restarts));
  Rows rows(oracle ? columns(n, "rank", "ricci", "oracle", "agree") : columns(n, "rank", "ricci"));
  Outcome o;
  ExtReal lo = ExtReal::pos_inf();
  bool agree_all = true;
  for (const Point& x : c.grid()) {
    const ExtReal r = ricci_n(op, f, x, N);
    const int rank = dim_gamma(op, x);
    lo = min(lo, r);
    if (oracle) {
      const OracleResult orc = ricci_infimum_oracle(op, f, x, N, opts);
      bool agree;
      if (r.is_finite() && orc.value.is_finite())
        agree = std::abs(r.value() - orc.value.value()) <= c.tol * orc.scale;
      else
        agree = r == orc.value;
      agree_all = agree_all && agree;
      rows.add(cells(x, rank, ext_json(r), ext_json(orc.value), agree));
    } else {
      rows.add(cells(x, rank, ext_json(r)));
    }
  }
  o.pass = agree_all;
  o.summary = {{"N", ext_json(N)}, {"min", ext_json(lo)}};
  if (oracle) o.summary["oracle_agrees"] = agree_all;
  o.points = rows.points();
  o.table = rows.table();
  return o;
}

Outcome be_outcome(const BEReport& rep, int n, bool with_k) {
  Rows rows(with_k ? columns(n, "rank", "mu", "K", "residual", "degenerate", "pass") : columns(n, "rank", "mu", "degenerate"));
  for (const auto& p : rep.points) {
    if (with_k)
      rows.add(cells(p.x, p.rank, ext_json(p.mu), p.K, ext_json(p.residual), p.degenerate, p.pass));
    else
      rows.add(cells(p.x, p.rank, ext_json(p.mu), p.degenerate));
  }
  Outcome o;
  o.points = rows.points();
  o.table = rows.table();
  return o;
}

Outcome cmd_check_be(const Context& c) {
  c.no_transform();
  c.no_domain();
  const auto op = c.op();
  const int n = op.dim();
  const Params P(c.job.params, {"K", "N"}, n);
  const BEReport rep = check_be(op, P.expr("K"), P.ext("N"), c.grid(), c.tol);
  Outcome o = be_outcome(rep, n, true);
  o.pass = rep.pass;
  json viol = json::array(), deg = json::array();
  for (auto i : rep.violations) viol.push_back(i);
  for (auto i : rep.degenerate_points) deg.push_back(i);
  o.summary = {{"N", ext_json(rep.N)},       {"inf_mu", ext_json(rep.inf_mu)}, {"min_residual", ext_json(rep.min_residual)},
               {"pass", rep.pass},            {"violations", viol},             {"degenerate_points", deg}};
  return o;
}

Outcome cmd_best_k(const Context& c) {
  c.no_transform();
  c.no_domain();
  const auto op = c.op();
  const int n = op.dim();
  const Params P(c.job.params, {"N"}, n);
  const ExtReal N = P.ext("N");
  const BEReport rep = check_be(op, Expr(0.0), N, c.grid(), c.tol);
  Outcome o = be_outcome(rep, n, false);
  o.summary = {{"N", ext_json(N)}, {"best_k", ext_json(rep.inf_mu)}};
  return o;
}

Outcome cmd_transform(const Context& c) {
  c.no_domain();
  const auto op = c.op();
  const int n = op.dim();
  const TransformSpec spec = c.transform(n);
  const Params P(c.job.params, {"u", "K", "N", "N_prime"}, n);
  const std::vector<Point> grid = c.job.grid ? grid_expand(*c.job.grid) : std::vector<Point>{};
  const DiffusionOperator op2 = transform_operator(op, spec, grid, c.tol);

  Outcome o;
  json a = json::array(), b = json::array();
  for (int i = 0; i < n; ++i) {
    json row = json::array();
    for (int j = 0; j < n; ++j) row.push_back(op2.a(i, j).str());
    a.push_back(row);
    b.push_back(op2.b(i).str());
  }
  o.summary["kind"] = to_string(spec.kind);
  o.summary["a"] = a;
  o.summary["b"] = b;

  const Expr u = P.expr_or("u", Expr::var(1));
  const Tape tape({gamma(op2, u, u), spec.f * spec.f * carre_du_champ(op, u, u)});
  Rows rows(columns(n, "gamma_prime", "f2_gamma", "residual"));
  double worst = 0.0;
  for (const Point& x : grid) {
    const auto v = tape.eval(x);
    const double r = scaled(v[0], v[1]);
    worst = std::max(worst, r);
    rows.add(cells(x, v[0], v[1], r));
  }
  o.summary["gamma_identity_residual"] = worst;
  o.pass = worst <= c.tol;

  if (P.has("K") || P.has("N") || P.has("N_prime")) {
    if (grid.empty()) throw UsageError("grid", "K' evaluation needs a grid");
    const Expr K = P.expr("K");
    const ExtReal N = P.ext("N"), Np = P.ext("N_prime");
    const KPrimeResult gen = kprime_general(op, spec, K, N, Np, grid);
    std::optional<KPrimeResult> dedicated;
    std::string formula;
    switch (spec.kind) {
      case TransformKind::TimeChange:
        dedicated = kprime_time_change(op, spec.f, K, N, Np, grid);
        formula = "time_change";
        break;
      case TransformKind::Drift:
      case TransformKind::Doob:
        dedicated = kprime_drift(op, spec.pairs, K, N, Np, grid);
        formula = "drift";
        break;
      case TransformKind::Conformal:
        if (Np == N) {
          dedicated = conformal_kprime(op, spec.f, K, N, grid);
          formula = "conformal";
        }
        break;
      default:
        break;
    }
    o.summary["N"] = ext_json(N);
    o.summary["N_prime"] = ext_json(Np);
    o.summary["kprime_general"] = ext_json(gen.inf);
    ExtReal kp = gen.inf;
    if (dedicated) {
      o.summary["kprime_" + formula] = ext_json(dedicated->inf);
      if (dedicated->n_star) o.summary["n_star"] = *dedicated->n_star;
      bool coherent;
      if (gen.inf.is_finite() && dedicated->inf.is_finite())
        coherent = scaled(gen.inf.value(), dedicated->inf.value()) <= 1e-9;
      else
        coherent = gen.inf == dedicated->inf;
      // The time change formula clips (N-2)(N'-2) at zero, which the general form only does for n >= 2.
      const bool expected = !(spec.kind == TransformKind::TimeChange && n == 1);
      o.summary["coherent"] = coherent;
      if (expected && !coherent) o.pass = false;
      kp = dedicated->inf;
    }
    o.summary["kprime"] = ext_json(kp);
    if (kp.is_finite()) {
      const BEReport be = check_be(op2, Expr(kp.value()), Np, grid, 1e-8);
      o.summary["be_transformed_pass"] = be.pass;
      o.summary["be_transformed_inf_mu"] = ext_json(be.inf_mu);
      o.pass = o.pass && be.pass;
    }
  }
  o.points = rows.points();
  o.table = rows.table();
  return o;
}

Outcome cmd_verify_conformal(const Context& c) {
  c.no_transform();
  c.no_domain();
  const auto op = c.op();
  const int n = op.dim();
  const Params P(c.job.params, {"w", "u", "N"}, n);
  const IdentityReport rep = conformal_ricci_identity(op, P.expr("w"), P.ext("N"), P.expr("u"), c.grid(), c.tol);
  Rows rows(columns(n, "direct", "assembled", "residual", "scale"));
  for (const auto& p : rep.points) rows.add(cells(p.x, ext_json(p.lhs), ext_json(p.rhs), p.residual, p.scale));
  Outcome o;
  o.pass = rep.ok;
  json skipped = json::array();
  for (auto i : rep.skipped) skipped.push_back(i);
  o.summary = {{"max_scaled_residual", rep.max_scaled_residual}, {"ok", rep.ok}, {"skipped", skipped}};
  o.points = rows.points();
  o.table = rows.table();
  return o;
}

Outcome cmd_verify_bound(const Context& c) {
  c.no_domain();
  const auto op = c.op();
  const int n = op.dim();
  const TransformSpec spec = c.transform(n);
  const Params P(c.job.params, {"N", "N_prime", "u", "u_tests"}, n);
  if (P.has("u") == P.has("u_tests")) throw UsageError("params", "give exactly one of u, u_tests");
  const std::vector<Expr> us = P.has("u") ? std::vector<Expr>{P.expr("u")} : P.exprs("u_tests");
  const ExtReal N = P.ext("N"), Np = P.ext("N_prime");
  const BoundReport rep = verify_transform_bound(op, spec, N, Np, us, c.grid(), c.tol);
  Rows rows(columns(n, "u_index", "transformed", "bound", "residual", "scale", "alternative"));
  double max_abs = 0.0;
  for (const auto& r : rep.records) {
    if (std::isfinite(r.residual)) max_abs = std::max(max_abs, std::abs(r.residual) / r.scale);
    rows.add(cells(r.x, r.u_index, ext_json(r.lhs), ext_json(r.rhs), r.residual, r.scale,
                   r.rhs_alternative ? json(*r.rhs_alternative) : json()));
  }
  Outcome o;
  o.pass = rep.ok;
  o.summary = {{"kind", to_string(spec.kind)},
               {"min_scaled_residual", rep.min_scaled_residual},
               {"max_abs_scaled_residual", max_abs},
               {"max_alternative_gap", rep.max_alternative_gap},
               {"skipped", rep.skipped.size()}};
  if (spec.kind == TransformKind::Drift && N.is_pos_inf() && Np.is_pos_inf()) {
    const bool equality = max_abs <= c.tol;
    o.summary["equality"] = equality;
    o.pass = o.pass && equality;
  }
  o.points = rows.points();
  o.table = rows.table();
  return o;
}

Outcome cmd_falsify(const Context& c) {
  c.no_transform();
  c.no_domain();
  c.no_grid();
  const Params P(c.job.params, {"n", "N", "trials", "functions"}, 1);
  const long long n = P.integer("n", 3);
  const double N = P.has("N") ? P.number("N") : static_cast<double>(n);
  FalsifierOptions opts;
  opts.seed = c.job.seed;
  opts.threshold = c.tol;
  const long long trials = P.integer("trials", static_cast<long long>(opts.trials));
  const long long functions = P.integer("functions", static_cast<long long>(opts.functions));
  if (trials < 1 || functions < 1) throw UsageError("params", "trials and functions must be positive");
  opts.trials = static_cast<std::size_t>(trials);
  opts.functions = static_cast<std::size_t>(functions);
  const FalsifierReport rep = wrong_constants_falsifier(static_cast<int>(n), N, opts);
  Rows rows({"pair", "c1", "c2", "violations", "min_residual", "witness_w", "witness_u", "witness_x"});
  Outcome o;
  json pairs = json::array();
  for (std::size_t k = 0; k < rep.pairs.size(); ++k) {
    const auto& p = rep.pairs[k];
    const std::string role = k == 0 ? "correct" : "wrong";
    const bool ok = k == 0 ? p.violations == 0 : p.violations > 0;
    o.pass = o.pass && ok;
    rows.add({json(role), json(p.pair.c1), json(p.pair.c2), json(p.violations), json(p.min_residual),
              p.witness ? json(p.witness->w) : json(), p.witness ? json(p.witness->u) : json(),
              p.witness ? point_json(p.witness->x) : json()});
    pairs.push_back({{"role", role}, {"c1", p.pair.c1}, {"c2", p.pair.c2}, {"violations", p.violations}, {"expected", ok}});
  }
  o.summary = {{"n", rep.n}, {"N", rep.N}, {"trials", rep.trials}, {"threshold", rep.threshold}, {"pairs", pairs}};
  o.points = rows.points();
  o.table = rows.table();
  return o;
}

Outcome cmd_spectral_gap(const Context& c) {
  c.no_transform();
  c.no_grid();
  const auto op = c.op();
  const Params P(c.job.params, {"count"}, op.dim());
  const Discretization1D d = discretize_1d(op, c.domain());
  const auto ev = spectrum(d);
  const long long count = std::min<long long>(P.integer("count", 6), static_cast<long long>(ev.size()));
  if (count < 1) throw UsageError("params.count", "must be positive");
  Rows rows({"index", "eigenvalue"});
  for (long long i = 0; i < count; ++i) rows.add({json(i), json(ev[i])});
  Outcome o;
  o.pass = d.symmetry_residual <= c.tol && d.row_sum_residual <= c.tol;
  o.summary = {{"gap", spectral_gap(d)},
               {"m", d.domain.m},
               {"circle", d.domain.circle},
               {"symmetry_residual", d.symmetry_residual},
               {"row_sum_residual", d.row_sum_residual}};
  o.points = rows.points();
  o.table = rows.table();
  return o;
}

Outcome cmd_lichnerowicz(const Context& c) {
  c.no_grid();
  const auto op = c.op();
  const Params P(c.job.params, {"K", "N", "N_prime"}, op.dim());
  std::optional<TransformSpec> spec;
  if (!c.job.transform_doc.is_null()) spec = c.transform(op.dim());
  const LichnerowiczReport rep = lichnerowicz_check(op, P.expr("K"), P.ext("N"), spec, P.ext_opt("N_prime"), c.domain(), c.tol);
  Outcome o;
  o.pass = rep.pass;
  o.summary = {{"gap", rep.gap},       {"inf_k", ext_json(rep.inf_k)}, {"N_prime", ext_json(rep.n_prime)},
               {"bound", ext_json(rep.bound)}, {"slack", rep.slack}, {"pass", rep.pass}};
  if (rep.n_star) o.summary["n_star"] = *rep.n_star;
  if (!rep.message.empty()) o.summary["message"] = rep.message;
  Rows rows({"gap", "bound", "slack"});
  rows.add({json(rep.gap), ext_json(rep.bound), json(rep.slack)});
  o.points = rows.points();
  o.table = rows.table();
  return o;
}

Outcome cmd_bonnet_myers(const Context& c) {
  c.no_transform();
  c.no_grid();
  const auto op = c.op();
  const Params P(c.job.params, {"f", "K", "K_bound", "N", "N_star"}, op.dim());
  const BonnetMyersReport rep = bonnet_myers_check(op, P.expr_or("f", Expr(1.0)), P.expr("K"), P.number_opt("K_bound"),
                                                   P.ext("N"), P.ext("N_star"), c.domain(), c.tol);
  Outcome o;
  o.pass = rep.pass;
  o.summary = {{"diameter", rep.diameter},     {"bound", ext_json(rep.bound)},   {"K_bound", rep.k_bound},
               {"hypothesis_min", rep.hypothesis_min}, {"f_max", rep.f_max}, {"hypothesis_ok", rep.hypothesis_ok},
               {"skipped", rep.skipped},        {"pass", rep.pass}};
  if (rep.hypothesis_fail_x) o.summary["hypothesis_fail_x"] = *rep.hypothesis_fail_x;
  if (!rep.message.empty()) o.summary["message"] = rep.message;
  Rows rows({"diameter", "bound", "K_bound", "hypothesis_min"});
  rows.add({json(rep.diameter), ext_json(rep.bound), json(rep.k_bound), json(rep.hypothesis_min)});
  o.points = rows.points();
  o.table = rows.table();
  return o;
}

Outcome cmd_mms(const Context& c) {
  c.no_transform();
  c.no_domain();
  const auto op = c.op();
  const int n = op.dim();
  const Params P(c.job.params, {"v", "w", "K", "N", "N_prime"}, n);
  const Expr v = P.expr_or("v", Expr(0.0)), w = P.expr_or("w", Expr(0.0)), K = P.expr("K");
  const ExtReal N = P.ext("N"), Np = P.ext("N_prime");
  const auto grid = c.grid();
  const MmsKPrime m = mms_kprime(op, v, w, K, N, Np, grid);
  const Expr f = exp(-w);
  TransformSpec spec = TransformSpec::general(f, {{f, v - Expr(2.0) * w}});
  if (Np == N && !N.is_pos_inf()) spec.kind = TransformKind::Conformal;
  const KPrimeResult gen = kprime_general(op, spec, K, N, Np, grid);
  Rows rows(columns(n, "kprime", "general", "no_measure"));
  bool coherent = true;
  auto close = [](ExtReal a, ExtReal b) {
    if (a.is_finite() && b.is_finite()) return scaled(a.value(), b.value());
    return a == b ? 0.0 : kInf;
  };
  double worst = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const ExtReal a = m.value.points[i].value, g = gen.points[i].value;
    worst = std::max(worst, close(a, g));
    json nm;
    if (m.no_measure) {
      nm = ext_json(m.no_measure->points[i].value);
      worst = std::max(worst, close(a, m.no_measure->points[i].value));
    }
    rows.add(cells(grid[i], ext_json(a), ext_json(g), nm));
  }
  coherent = worst <= c.tol;
  Outcome o;
  o.pass = coherent;
  o.summary = {{"kprime", ext_json(m.value.inf)}, {"general", ext_json(gen.inf)}, {"max_residual", worst},
               {"coherent", coherent}};
  if (m.no_measure) o.summary["no_measure"] = ext_json(m.no_measure->inf);
  o.points = rows.points();
  o.table = rows.table();
  return o;
}

Outcome dispatch(const std::string& command, const Context& c) {
  if (command == "gamma") return cmd_gamma(c);
  if (command == "gamma2") return cmd_gamma2(c);
  if (command == "hessian") return cmd_hessian(c);
  if (command == "ricci") return cmd_ricci(c);
  if (command == "check-be") return cmd_check_be(c);
  if (command == "best-k") return cmd_best_k(c);
  if (command == "transform") return cmd_transform(c);
  if (command == "verify-conformal") return cmd_verify_conformal(c);
  if (command == "verify-bound") return cmd_verify_bound(c);
  if (command == "falsify-constants") return cmd_falsify(c);
  if (command == "spectral-gap") return cmd_spectral_gap(c);
  if (command == "lichnerowicz") return cmd_lichnerowicz(c);
  if (command == "bonnet-myers") return cmd_bonnet_myers(c);
  if (command == "mms-kprime") return cmd_mms(c);
  throw UsageError("command", "unknown command '" + command + "'");
}

}  // namespace

RunResult run(const std::string& command, JobSpec job) {
  RunResult r;
  json& rep = r.report;
  rep["tool"] = {{"name", "gammaforge"}, {"version", kToolVersion}};
  rep["command"] = command;
  rep["seed"] = job.seed;
  auto fail = [&](const std::string& type, const std::string& message, const std::string& path) {
    r.exit_code = 2;
    rep["status"] = "error";
    rep["exit_code"] = 2;
    rep["error"] = {{"type", type}, {"message", message}};
    if (!path.empty()) rep["error"]["path"] = path;
    rep["job"] = job.source;
    r.table = CsvTable{{"error"}, {{message}}};
  };
  try {
    if (std::find(commands().begin(), commands().end(), command) == commands().end())
      throw UsageError("command", "unknown command '" + command + "'");
    if (!job.command.empty() && job.command != command)
      throw UsageError("command", "job is for '" + job.command + "', not '" + command + "'");
    const double tol = job.tol.value_or(default_tolerances().at(command));
    rep["tolerance"] = tol;
    Outcome o = dispatch(command, Context{job, tol});
    r.exit_code = o.pass ? 0 : 1;
    rep["status"] = o.pass ? "pass" : "fail";
    rep["exit_code"] = r.exit_code;
    rep["job"] = job.source;
    rep["summary"] = std::move(o.summary);
    rep["points"] = std::move(o.points);
    r.table = std::move(o.table);
  } catch (const UsageError& e) {
    fail("usage", e.what(), e.path());
  } catch (const ParseError& e) {
    fail("parse", e.what(), "");
  } catch (const DomainError& e) {
    fail("domain", e.what(), "");
  } catch (const DimensionError& e) {
    fail("dimension", e.what(), "");
  } catch (const std::invalid_argument& e) {
    fail("argument", e.what(), "");
  } catch (const std::exception& e) {
    fail("runtime", e.what(), "");
  }
  return r;
}

}  // namespace gammaforge::cli
