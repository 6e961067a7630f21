#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "gammaforge/cli.hpp"
#include "gammaforge/models.hpp"

namespace py = pybind11;
using namespace gammaforge;

namespace {

double ext(ExtReal v) { return static_cast<double>(v.is_finite() ? v.value() : (v.is_pos_inf() ? INFINITY : -INFINITY)); }

std::vector<Point> points(const std::vector<std::vector<double>>& g) { return g; }

py::dict kprime_dict(const KPrimeResult& r) {
  py::dict d;
  d["inf"] = ext(r.inf);
  d["argmin"] = r.argmin;
  std::vector<double> values;
  for (const auto& p : r.points) values.push_back(ext(p.value));
  d["values"] = values;
  if (r.n_star) d["n_star"] = *r.n_star;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Gamma-calculus engine";

  py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
  py::register_exception<DomainError>(m, "DomainError", PyExc_ArithmeticError);

  py::class_<Expr>(m, "Expr")
      .def(py::init<double>())
      .def_static("var", &Expr::var)
      .def("diff", &Expr::diff)
      .def("eval", [](const Expr& e, const std::vector<double>& x) { return e.eval(x); })
      .def("__str__", &Expr::str)
      .def("__repr__", [](const Expr& e) { return "Expr('" + e.str() + "')"; })
      .def("__add__", [](const Expr& a, const Expr& b) { return a + b; })
      .def("__sub__", [](const Expr& a, const Expr& b) { return a - b; })
      .def("__mul__", [](const Expr& a, const Expr& b) { return a * b; })
      .def("__truediv__", [](const Expr& a, const Expr& b) { return a / b; })
      .def("__neg__", [](const Expr& a) { return -a; });
  py::implicitly_convertible<double, Expr>();

  m.def("parse", [](const std::string& text, int dim) { return parse(text, dim); }, py::arg("text"), py::arg("dim"));

  py::class_<DiffusionOperator>(m, "DiffusionOperator")
      .def_static("euclidean", &DiffusionOperator::euclidean)
      .def_static("ornstein_uhlenbeck", &DiffusionOperator::ornstein_uhlenbeck)
      .def_static("from_strings", &DiffusionOperator::from_strings, py::arg("dim"), py::arg("a"), py::arg("b"))
      .def_property_readonly("dim", &DiffusionOperator::dim)
      .def_property_readonly("warnings", &DiffusionOperator::warnings)
      .def("a", py::overload_cast<int, int>(&DiffusionOperator::a, py::const_))
      .def("b", py::overload_cast<int>(&DiffusionOperator::b, py::const_))
      .def("coefficient_matrix", [](const DiffusionOperator& op, const std::vector<double>& x) {
        return op.coefficient_matrix(x);
      });

  m.def("poincare_ball", &poincare_ball, py::arg("n"), py::arg("R") = 1.0);
  m.def("sphere_radial", &sphere_radial, py::arg("n"));
  m.def("degenerate_plane", &degenerate_plane);
  m.def("laplace_beltrami", [](int n, const std::vector<std::vector<std::string>>& g) {
    RiemannianSpec spec;
    spec.n = n;
    for (const auto& row : g) {
      spec.g.emplace_back();
      for (const auto& s : row) spec.g.back().push_back(parse(s, n));
    }
    return laplace_beltrami(spec);
  });

  m.def("apply_L", &apply_L);
  m.def("gamma", [](const DiffusionOperator& op, const Expr& u, const Expr& v) { return gammaforge::gamma(op, u, v); });
  m.def("gamma2", &gamma2);
  m.def("hessian", &hessian);
  m.def("hessian_matrix", [](const DiffusionOperator& op, const Expr& f, const std::vector<double>& x) {
    return hessian_matrix(op, f, x);
  });

  m.def("dim_gamma", [](const DiffusionOperator& op, const std::vector<double>& x) { return dim_gamma(op, x); });
  m.def("ricci_n", [](const DiffusionOperator& op, const Expr& f, const std::vector<double>& x, double N) {
    return ext(ricci_n(op, f, x, N));
  });
  m.def("ricci_form_matrix", [](const DiffusionOperator& op, const std::vector<double>& x, double N) {
    const RicciForm r = ricci_form_matrix(op, x, N);
    py::dict d;
    d["M"] = r.M;
    d["A"] = r.A;
    d["rank"] = r.rank;
    d["minus_infinity"] = r.minus_infinity;
    d["all_minus_infinity"] = r.all_minus_infinity;
    d["min_ratio"] = ext(min_ricci_ratio(r));
    return d;
  });
  m.def(
      "ricci_infimum_oracle",
      [](const DiffusionOperator& op, const Expr& f, const std::vector<double>& x, double N, std::uint64_t seed) {
        OracleOptions o;
        o.seed = seed;
        const OracleResult r = ricci_infimum_oracle(op, f, x, N, o);
        py::dict d;
        d["value"] = ext(r.value);
        d["converged"] = r.converged;
        d["diverged"] = r.diverged;
        d["gradient_norm"] = r.gradient_norm;
        d["scale"] = r.scale;
        return d;
      },
      py::arg("op"), py::arg("f"), py::arg("x"), py::arg("N"), py::arg("seed") = cli::kDefaultSeed);
  m.def(
      "check_be",
      [](const DiffusionOperator& op, const Expr& K, double N, const std::vector<std::vector<double>>& grid, double tol) {
        const BEReport r = check_be(op, K, N, points(grid), tol);
        py::dict d;
        d["pass"] = r.pass;
        d["inf_mu"] = ext(r.inf_mu);
        d["min_residual"] = ext(r.min_residual);
        d["violations"] = r.violations;
        d["degenerate_points"] = r.degenerate_points;
        return d;
      },
      py::arg("op"), py::arg("K"), py::arg("N"), py::arg("grid"), py::arg("tol") = 1e-8);
  m.def("best_k", [](const DiffusionOperator& op, double N, const std::vector<std::vector<double>>& grid) {
    return ext(best_k(op, N, points(grid)));
  });

  py::class_<TransformSpec>(m, "TransformSpec")
      .def_static("time_change", &TransformSpec::time_change)
      .def_static("time_change_exp", &TransformSpec::time_change_exp)
      .def_static("drift", &TransformSpec::drift)
      .def_static("metric", &TransformSpec::metric)
      .def_static("conformal", [](const Expr& w, double N) { return TransformSpec::conformal(w, N); })
      .def_static("conformal_factor", [](const Expr& f, double N) { return TransformSpec::conformal_factor(f, N); })
      .def_static("doob", &TransformSpec::doob)
      .def_static("general",
                  [](const Expr& f, const std::vector<std::pair<Expr, Expr>>& pairs) {
                    std::vector<TransformPair> p;
                    for (const auto& [g, h] : pairs) p.push_back({g, h});
                    return TransformSpec::general(f, p);
                  })
      .def_property_readonly("kind", [](const TransformSpec& s) { return to_string(s.kind); })
      .def_readonly("f", &TransformSpec::f);

  m.def(
      "transform_operator",
      [](const DiffusionOperator& op, const TransformSpec& s, const std::vector<std::vector<double>>& check) {
        return transform_operator(op, s, points(check));
      },
      py::arg("op"), py::arg("spec"), py::arg("check_points") = std::vector<std::vector<double>>{});
  m.def("kprime_general", [](const DiffusionOperator& op, const TransformSpec& s, const Expr& K, double N, double Np,
                             const std::vector<std::vector<double>>& grid) {
    return kprime_dict(kprime_general(op, s, K, N, Np, points(grid)));
  });
  m.def("kprime_time_change", [](const DiffusionOperator& op, const Expr& f, const Expr& K, double N, double Np,
                                 const std::vector<std::vector<double>>& grid) {
    return kprime_dict(kprime_time_change(op, f, K, N, Np, points(grid)));
  });
  m.def("kprime_drift", [](const DiffusionOperator& op, const std::vector<std::pair<Expr, Expr>>& Z, const Expr& K,
                           double N, double Np, const std::vector<std::vector<double>>& grid) {
    std::vector<TransformPair> p;
    for (const auto& [g, h] : Z) p.push_back({g, h});
    return kprime_dict(kprime_drift(op, p, K, N, Np, points(grid)));
  });
  m.def("conformal_kprime", [](const DiffusionOperator& op, const Expr& f, const Expr& K, double N,
                               const std::vector<std::vector<double>>& grid) {
    return kprime_dict(conformal_kprime(op, f, K, N, points(grid)));
  });
  m.def("mms_kprime", [](const DiffusionOperator& op, const Expr& v, const Expr& w, const Expr& K, double N, double Np,
                         const std::vector<std::vector<double>>& grid) {
    const MmsKPrime r = mms_kprime(op, v, w, K, N, Np, points(grid));
    py::dict d = kprime_dict(r.value);
    if (r.no_measure) d["no_measure"] = ext(r.no_measure->inf);
    return d;
  });
  m.def(
      "conformal_ricci_identity",
      [](const DiffusionOperator& op, const Expr& w, double N, const Expr& u, const std::vector<std::vector<double>>& grid,
         double tol) {
        const IdentityReport r = conformal_ricci_identity(op, w, N, u, points(grid), tol);
        py::dict d;
        d["ok"] = r.ok;
        d["max_scaled_residual"] = r.max_scaled_residual;
        d["skipped"] = r.skipped;
        return d;
      },
      py::arg("op"), py::arg("w"), py::arg("N"), py::arg("u"), py::arg("grid"), py::arg("tol") = 1e-7);
  m.def(
      "verify_transform_bound",
      [](const DiffusionOperator& op, const TransformSpec& s, double N, double Np, const std::vector<Expr>& us,
         const std::vector<std::vector<double>>& grid, double tol) {
        const BoundReport r = verify_transform_bound(op, s, N, Np, us, points(grid), tol);
        py::dict d;
        d["ok"] = r.ok;
        d["min_scaled_residual"] = r.min_scaled_residual;
        d["max_alternative_gap"] = r.max_alternative_gap;
        return d;
      },
      py::arg("op"), py::arg("spec"), py::arg("N"), py::arg("N_prime"), py::arg("u_tests"), py::arg("grid"),
      py::arg("tol") = 1e-7);
  m.def(
      "wrong_constants_falsifier",
      [](int n, double N, std::size_t trials, std::uint64_t seed) {
        FalsifierOptions o;
        o.trials = trials;
        o.seed = seed;
        const FalsifierReport r = wrong_constants_falsifier(n, N, o);
        py::list pairs;
        for (const auto& p : r.pairs) {
          py::dict d;
          d["c1"] = p.pair.c1;
          d["c2"] = p.pair.c2;
          d["violations"] = p.violations;
          d["min_residual"] = p.min_residual;
          pairs.append(d);
        }
        return pairs;
      },
      py::arg("n"), py::arg("N"), py::arg("trials") = 10000, py::arg("seed") = cli::kDefaultSeed);

  m.def(
      "spectrum",
      [](const DiffusionOperator& op, double left, double right, int m, bool circle) {
        return spectrum(discretize_1d(op, Domain1D{left, right, circle, m}));
      },
      py::arg("op"), py::arg("left"), py::arg("right"), py::arg("m") = 256, py::arg("circle") = false);
  m.def(
      "spectral_gap",
      [](const DiffusionOperator& op, double left, double right, int m, bool circle) {
        return spectral_gap(discretize_1d(op, Domain1D{left, right, circle, m}));
      },
      py::arg("op"), py::arg("left"), py::arg("right"), py::arg("m") = 256, py::arg("circle") = false);
  m.def(
      "lichnerowicz_check",
      [](const DiffusionOperator& op, const Expr& K, double N, double left, double right, int m) {
        const LichnerowiczReport r = lichnerowicz_check(op, K, N, std::nullopt, std::nullopt, Domain1D{left, right, false, m});
        py::dict d;
        d["gap"] = r.gap;
        d["bound"] = ext(r.bound);
        d["pass"] = r.pass;
        return d;
      },
      py::arg("op"), py::arg("K"), py::arg("N"), py::arg("left"), py::arg("right"), py::arg("m") = 512);
  m.def(
      "bonnet_myers_check",
      [](const DiffusionOperator& op, const Expr& f, const Expr& K, std::optional<double> k_bound, double N,
         double n_star, double left, double right, int m) {
        const BonnetMyersReport r = bonnet_myers_check(op, f, K, k_bound, N, n_star, Domain1D{left, right, false, m});
        py::dict d;
        d["diameter"] = r.diameter;
        d["bound"] = ext(r.bound);
        d["hypothesis_ok"] = r.hypothesis_ok;
        d["skipped"] = r.skipped;
        d["pass"] = r.pass;
        return d;
      },
      py::arg("op"), py::arg("f"), py::arg("K"), py::arg("K_bound"), py::arg("N"), py::arg("N_star"), py::arg("left"),
      py::arg("right"), py::arg("m") = 512);

  m.def(
      "run_job",
      [](const std::string& command, const std::string& text, std::optional<std::uint64_t> seed,
         std::optional<double> tol) {
        cli::RunResult r;
        try {
          cli::JobSpec job = cli::parse_job(cli::json::parse(text));
          if (seed) job.seed = *seed;
          if (tol) job.tol = *tol;
          r = cli::run(command, std::move(job));
        } catch (const std::exception& e) {
          r.exit_code = 2;
          r.report = {{"command", command}, {"status", "error"}, {"exit_code", 2}, {"error", {{"message", e.what()}}}};
        }
        return py::make_tuple(r.exit_code, r.report.dump(), r.table.str());
      },
      py::arg("command"), py::arg("job"), py::arg("seed") = std::nullopt, py::arg("tol") = std::nullopt);
}
