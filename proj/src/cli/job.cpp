#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include "gammaforge/cli.hpp"
#include "gammaforge/models.hpp"

namespace gammaforge::cli {

namespace {

void require_object(const json& doc, const std::string& path) {
  if (!doc.is_object()) throw UsageError(path, "expected an object");
}

void reject_unknown(const json& doc, const std::string& path, const std::set<std::string>& allowed) {
  for (const auto& [key, _] : doc.items())
    if (!allowed.count(key)) throw UsageError(path.empty() ? key : path + "." + key, "unknown field");
}

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

double number_at(const json& doc, const std::string& path) {
  if (!doc.is_number()) throw UsageError(path, "expected a number");
  return doc.get<double>();
}

int int_at(const json& doc, const std::string& path) {
  if (!doc.is_number_integer()) throw UsageError(path, "expected an integer");
  return doc.get<int>();
}

std::string expr_text(const json& doc, const std::string& path) {
  if (doc.is_string()) return doc.get<std::string>();
  if (doc.is_number()) return format_real(doc.get<double>());
  throw UsageError(path, "expected an expression string or a number");
}

std::vector<std::vector<std::string>> matrix_text(const json& doc, int n, const std::string& path) {
  if (!doc.is_array() || static_cast<int>(doc.size()) != n) throw UsageError(path, "expected " + std::to_string(n) + " rows");
  std::vector<std::vector<std::string>> m(n);
  for (int i = 0; i < n; ++i) {
    const std::string rp = path + "[" + std::to_string(i) + "]";
    if (!doc[i].is_array() || static_cast<int>(doc[i].size()) != n)
      throw UsageError(rp, "expected " + std::to_string(n) + " entries");
    for (int j = 0; j < n; ++j) m[i].push_back(expr_text(doc[i][j], rp + "[" + std::to_string(j) + "]"));
  }
  return m;
}

Expr parse_at(const std::string& text, int dim, const std::string& path) {
  try {
    return parse(text, dim);
  } catch (const ParseError& e) {
    throw UsageError(path, e.what());
  }
}

}  // namespace

const std::vector<std::string>& commands() {
  static const std::vector<std::string> names = {
      "gamma",        "gamma2",        "hessian",           "ricci",        "check-be",
      "best-k",       "transform",     "verify-conformal",  "verify-bound", "falsify-constants",
      "spectral-gap", "lichnerowicz",  "bonnet-myers",      "mms-kprime"};
  return names;
}

std::vector<Point> grid_expand(const GridSpec& spec) {
  if (!spec.points.empty()) return spec.points;
  if (spec.axes.empty()) throw UsageError("grid", "no axes and no points");
  std::size_t total = 1;
  for (std::size_t k = 0; k < spec.axes.size(); ++k) {
    const auto& ax = spec.axes[k];
    const std::string path = "grid.axes[" + std::to_string(k) + "]";
    if (ax.count < 1) throw UsageError(path + ".count", "count must be >= 1");
    if (ax.min > ax.max) throw UsageError(path, "min > max");
    total *= static_cast<std::size_t>(ax.count);
  }
  std::vector<Point> pts;
  pts.reserve(total);
  std::vector<int> idx(spec.axes.size(), 0);
  for (std::size_t t = 0; t < total; ++t) {
    Point p(spec.axes.size());
    for (std::size_t k = 0; k < spec.axes.size(); ++k) {
      const auto& ax = spec.axes[k];
      p[k] = ax.count == 1 ? ax.min : ax.min + (ax.max - ax.min) * idx[k] / (ax.count - 1);
    }
    pts.push_back(std::move(p));
    for (int k = static_cast<int>(idx.size()) - 1; k >= 0; --k) {
      if (++idx[k] < spec.axes[k].count) break;
      idx[k] = 0;
    }
  }
  return pts;
}

GridSpec parse_grid(const json& doc, int dim) {
  require_object(doc, "grid");
  reject_unknown(doc, "grid", {"axes", "points"});
  GridSpec g;
  if (doc.contains("axes") == doc.contains("points")) throw UsageError("grid", "give exactly one of axes, points");
  if (doc.contains("axes")) {
    const json& axes = doc["axes"];
    if (!axes.is_array() || static_cast<int>(axes.size()) != dim)
      throw UsageError("grid.axes", "expected " + std::to_string(dim) + " axes");
    for (std::size_t k = 0; k < axes.size(); ++k) {
      const std::string path = "grid.axes[" + std::to_string(k) + "]";
      require_object(axes[k], path);
      reject_unknown(axes[k], path, {"min", "max", "count"});
      for (const char* key : {"min", "max", "count"})
        if (!axes[k].contains(key)) throw UsageError(join(path, key), "missing");
      AxisSpec ax{number_at(axes[k]["min"], path + ".min"), number_at(axes[k]["max"], path + ".max"),
                  int_at(axes[k]["count"], path + ".count")};
      if (ax.count < 1) throw UsageError(path + ".count", "count must be >= 1");
      if (ax.min > ax.max) throw UsageError(path, "min > max");
      g.axes.push_back(ax);
    }
  } else {
    const json& pts = doc["points"];
    if (!pts.is_array() || pts.empty()) throw UsageError("grid.points", "expected a nonempty array");
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const std::string path = "grid.points[" + std::to_string(i) + "]";
      if (!pts[i].is_array() || static_cast<int>(pts[i].size()) != dim)
        throw UsageError(path, "expected " + std::to_string(dim) + " coordinates");
      Point p;
      for (std::size_t k = 0; k < pts[i].size(); ++k) p.push_back(number_at(pts[i][k], path));
      g.points.push_back(std::move(p));
    }
  }
  return g;
}

DiffusionOperator build_operator(const json& doc) {
  require_object(doc, "operator");
  reject_unknown(doc, "operator", {"preset", "dim", "a", "b", "metric", "R", "sphere_dim"});
  if (!doc.contains("dim")) throw UsageError("operator.dim", "missing");
  const int n = int_at(doc["dim"], "operator.dim");
  if (n < 1) throw UsageError("operator.dim", "must be >= 1");
  if (doc.contains("preset")) {
    if (!doc["preset"].is_string()) throw UsageError("operator.preset", "expected a string");
    const std::string preset = doc["preset"].get<std::string>();
    if (doc.contains("a") || doc.contains("b") || doc.contains("metric"))
      throw UsageError("operator", "preset excludes a, b and metric");
    if (doc.contains("R") && preset != "poincare_ball") throw UsageError("operator.R", "only used by poincare_ball");
    if (doc.contains("sphere_dim") && preset != "sphere_radial")
      throw UsageError("operator.sphere_dim", "only used by sphere_radial");
    if (preset == "euclidean") return DiffusionOperator::euclidean(n);
    if (preset == "ornstein_uhlenbeck") return DiffusionOperator::ornstein_uhlenbeck(n);
    if (preset == "poincare_ball") return poincare_ball(n, doc.contains("R") ? number_at(doc["R"], "operator.R") : 1.0);
    if (preset == "sphere_radial") {
      if (n != 1) throw UsageError("operator.dim", "sphere_radial needs dim 1");
      if (!doc.contains("sphere_dim")) throw UsageError("operator.sphere_dim", "missing");
      const int sn = int_at(doc["sphere_dim"], "operator.sphere_dim");
      if (sn < 1) throw UsageError("operator.sphere_dim", "must be >= 1");
      return sphere_radial(sn);
    }
    if (preset == "degenerate_plane") {
      if (n != 2) throw UsageError("operator.dim", "degenerate_plane needs dim 2");
      return degenerate_plane();
    }
    throw UsageError("operator.preset", "unknown preset '" + preset + "'");
  }
  if (doc.contains("R") || doc.contains("sphere_dim")) throw UsageError("operator", "R and sphere_dim need a preset");
  if (doc.contains("metric")) {
    if (doc.contains("a") || doc.contains("b")) throw UsageError("operator", "metric excludes a and b");
    const auto g = matrix_text(doc["metric"], n, "operator.metric");
    RiemannianSpec spec;
    spec.n = n;
    spec.g.resize(n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        spec.g[i].push_back(parse_at(g[i][j], n, "operator.metric[" + std::to_string(i) + "][" + std::to_string(j) + "]"));
    return laplace_beltrami(spec);
  }
  if (!doc.contains("a") || !doc.contains("b")) throw UsageError("operator", "need a and b, metric, or preset");
  const auto a = matrix_text(doc["a"], n, "operator.a");
  const json& bdoc = doc["b"];
  if (!bdoc.is_array() || static_cast<int>(bdoc.size()) != n)
    throw UsageError("operator.b", "expected " + std::to_string(n) + " entries");
  std::vector<std::vector<Expr>> ae(n);
  std::vector<Expr> be;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j)
      ae[i].push_back(parse_at(a[i][j], n, "operator.a[" + std::to_string(i) + "][" + std::to_string(j) + "]"));
    be.push_back(parse_at(expr_text(bdoc[i], "operator.b[" + std::to_string(i) + "]"), n,
                          "operator.b[" + std::to_string(i) + "]"));
  }
  return DiffusionOperator(ae, be);
}

TransformSpec build_transform(const json& doc, int dim) {
  require_object(doc, "transform");
  reject_unknown(doc, "transform", {"kind", "f", "w", "h", "rho", "pairs", "N"});
  if (!doc.contains("kind") || !doc["kind"].is_string()) throw UsageError("transform.kind", "missing or not a string");
  TransformKind kind;
  try {
    kind = transform_kind_from_string(doc["kind"].get<std::string>());
  } catch (const std::invalid_argument& e) {
    throw UsageError("transform.kind", e.what());
  }
  auto expr = [&](const char* key) -> std::optional<Expr> {
    if (!doc.contains(key)) return std::nullopt;
    const std::string path = std::string("transform.") + key;
    return parse_at(expr_text(doc[key], path), dim, path);
  };
  auto need = [&](const char* key) {
    auto e = expr(key);
    if (!e) throw UsageError(std::string("transform.") + key, "missing");
    return *e;
  };
  auto allow_only = [&](std::set<std::string> keys) {
    keys.insert("kind");
    reject_unknown(doc, "transform", keys);
  };
  std::vector<TransformPair> pairs;
  if (doc.contains("pairs")) {
    const json& pd = doc["pairs"];
    if (!pd.is_array()) throw UsageError("transform.pairs", "expected an array");
    for (std::size_t i = 0; i < pd.size(); ++i) {
      const std::string path = "transform.pairs[" + std::to_string(i) + "]";
      require_object(pd[i], path);
      reject_unknown(pd[i], path, {"g", "h"});
      if (!pd[i].contains("g") || !pd[i].contains("h")) throw UsageError(path, "need g and h");
      pairs.push_back({parse_at(expr_text(pd[i]["g"], path + ".g"), dim, path + ".g"),
                       parse_at(expr_text(pd[i]["h"], path + ".h"), dim, path + ".h")});
    }
  }
  switch (kind) {
    case TransformKind::General:
      allow_only({"f", "pairs"});
      return TransformSpec::general(expr("f").value_or(Expr(1.0)), pairs);
    case TransformKind::TimeChange:
      allow_only({"f", "w"});
      if (doc.contains("f") == doc.contains("w")) throw UsageError("transform", "time_change needs exactly one of f, w");
      return doc.contains("w") ? TransformSpec::time_change_exp(need("w")) : TransformSpec::time_change(need("f"));
    case TransformKind::Drift:
      allow_only({"h", "pairs"});
      if (doc.contains("h") == doc.contains("pairs")) throw UsageError("transform", "drift needs exactly one of h, pairs");
      return doc.contains("h") ? TransformSpec::drift(need("h")) : TransformSpec::vector_drift(pairs);
    case TransformKind::Metric:
      allow_only({"f"});
      return TransformSpec::metric(need("f"));
    case TransformKind::Conformal: {
      allow_only({"f", "w", "N"});
      if (doc.contains("f") == doc.contains("w")) throw UsageError("transform", "conformal needs exactly one of f, w");
      if (!doc.contains("N")) throw UsageError("transform.N", "missing");
      ExtReal N;
      const json& nd = doc["N"];
      if (nd.is_number())
        N = nd.get<double>();
      else
        throw UsageError("transform.N", "expected a finite number");
      return doc.contains("w") ? TransformSpec::conformal(need("w"), N) : TransformSpec::conformal_factor(need("f"), N);
    }
    case TransformKind::Doob:
      allow_only({"rho"});
      return TransformSpec::doob(need("rho"));
  }
  throw UsageError("transform.kind", "unsupported");
}

JobSpec parse_job(const json& doc) {
  require_object(doc, "");
  reject_unknown(doc, "", {"command", "operator", "transform", "params", "grid", "domain", "seed", "tol", "output"});
  JobSpec job;
  job.source = doc;
  if (doc.contains("command")) {
    if (!doc["command"].is_string()) throw UsageError("command", "expected a string");
    job.command = doc["command"].get<std::string>();
    if (std::find(commands().begin(), commands().end(), job.command) == commands().end())
      throw UsageError("command", "unknown command '" + job.command + "'");
  }
  if (doc.contains("operator")) job.operator_doc = doc["operator"];
  if (doc.contains("transform")) job.transform_doc = doc["transform"];
  if (doc.contains("params")) {
    require_object(doc["params"], "params");
    job.params = doc["params"];
  }
  if (doc.contains("grid")) {
    int dim = 0;
    if (job.operator_doc.is_object() && job.operator_doc.contains("dim") && job.operator_doc["dim"].is_number_integer())
      dim = job.operator_doc["dim"].get<int>();
    else
      throw UsageError("grid", "a grid needs operator.dim");
    job.grid = parse_grid(doc["grid"], dim);
  }
  if (doc.contains("domain")) {
    const json& d = doc["domain"];
    require_object(d, "domain");
    reject_unknown(d, "domain", {"left", "right", "circle", "m"});
    Domain1D dom;
    if (!d.contains("left") || !d.contains("right")) throw UsageError("domain", "need left and right");
    dom.left = number_at(d["left"], "domain.left");
    dom.right = number_at(d["right"], "domain.right");
    if (d.contains("circle")) {
      if (!d["circle"].is_boolean()) throw UsageError("domain.circle", "expected a boolean");
      dom.circle = d["circle"].get<bool>();
    }
    if (d.contains("m")) dom.m = int_at(d["m"], "domain.m");
    if (!(dom.right > dom.left)) throw UsageError("domain", "need left < right");
    if (dom.m < 3) throw UsageError("domain.m", "need m >= 3");
    job.domain = dom;
  }
  if (doc.contains("seed")) {
    const json& s = doc["seed"];
    if (!s.is_number_unsigned() && !(s.is_number_integer() && s.get<std::int64_t>() >= 0)) throw UsageError("seed", "expected a nonnegative integer");
    job.seed = doc["seed"].get<std::uint64_t>();
  }
  if (doc.contains("tol")) {
    job.tol = number_at(doc["tol"], "tol");
    if (!(*job.tol > 0.0)) throw UsageError("tol", "must be positive");
  }
  if (doc.contains("output")) {
    const json& o = doc["output"];
    require_object(o, "output");
    reject_unknown(o, "output", {"report", "csv"});
    for (const char* key : {"report", "csv"}) {
      if (!o.contains(key)) continue;
      if (!o[key].is_string()) throw UsageError(join("output", key), "expected a string");
      (std::string(key) == "report" ? job.report_path : job.csv_path) = o[key].get<std::string>();
    }
  }
  return job;
}

JobSpec load_job(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("", "cannot open job file '" + path + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw UsageError("", std::string("job file is not valid JSON: ") + e.what());
  }
  return parse_job(doc);
}

std::string format_real(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

json ext_json(ExtReal v) {
  if (v.is_finite()) return v.value();
  return v.is_pos_inf() ? "inf" : "-inf";
}

std::string CsvTable::str() const {
  auto field = [](const std::string& s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) {
      if (c == '"') q += '"';
      q += c;
    }
    return q + "\"";
  };
  std::ostringstream out;
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out << (i ? "," : "") << field(cells[i]);
    out << "\r\n";
  };
  line(header);
  for (const auto& r : rows) line(r);
  return out.str();
}

}  // namespace gammaforge::cli
