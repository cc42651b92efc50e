// Python bindings: a thin, dict-returning wrapper over the core library.
// Problems are addressed by catalog name so no std::function plumbing leaks
// into Python.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "isdiff/action.hpp"
#include "isdiff/catalog.hpp"
#include "isdiff/expansion.hpp"
#include "isdiff/pde1d.hpp"
#include "isdiff/simulate.hpp"

namespace py = pybind11;
using namespace isdiff;

namespace {

using Params = std::map<std::string, double>;

BuiltinProblem resolve(const std::string& name, const Params& params,
                       std::optional<double> eps) {
    auto p = builtin_problem(name, params);
    if (eps) {
        if (*eps <= 0.0) throw ArgumentError("epsilon must be positive");
        p.spec.epsilon = *eps;
    }
    return p;
}

ControlPolicy make_control(const BuiltinProblem& p, const std::string& kind,
                           const std::vector<double>& values) {
    if (kind == "zero") return zero_control(p.spec.model.dim);
    if (kind == "constant") {
        if (static_cast<int>(values.size()) != p.spec.model.dim)
            throw ArgumentError("constant control needs one value per dimension");
        return constant_control(values);
    }
    if (kind == "subsolution") {
        if (!p.subsolution)
            throw ArgumentError("problem '" + p.name + "' has no catalog subsolution");
        return control_from_subsolution(p.spec.model, *p.subsolution);
    }
    throw ArgumentError("unknown control kind '" + kind + "' (zero|constant|subsolution)");
}

SimulationConfig make_sim(uint64_t n, double dt, uint64_t seed, int threads) {
    SimulationConfig cfg;
    cfg.n_samples = n;
    cfg.dt = dt;
    cfg.seed = seed;
    cfg.threads = threads;
    return cfg;
}

py::dict batch_dict(const EstimatorBatch& b) {
    py::dict d;
    d["n"] = b.n;
    d["n_nonzero"] = b.n_nonzero;
    d["mean"] = b.mean();
    d["log_mean"] = b.log_mean();
    d["second_moment"] = b.second_moment();
    d["variance"] = b.variance();
    d["std_error_mean"] = b.std_error_mean();
    d["se_second_moment"] = b.se_second_moment();
    d["relative_error"] = b.relative_error();
    d["se_relative_error"] = b.se_relative_error();
    d["minus_eps_log_q"] = b.minus_eps_log_q();
    d["se_minus_eps_log_q"] = b.se_minus_eps_log_q();
    d["degenerate"] = b.degenerate();
    return d;
}

py::dict result_dict(const VariationalResult& r) {
    py::dict d;
    d["value"] = r.value;
    d["converged"] = r.converged;
    d["unbounded"] = r.unbounded;
    d["gradient_norm"] = r.gradient_norm;
    d["iterations"] = r.iterations;
    d["restarts_used"] = r.restarts_used;
    py::list times, states;
    for (double t : r.optimizer.times) times.append(t);
    for (const auto& x : r.optimizer.states) {
        py::list row;
        for (double v : x) row.append(v);
        states.append(row);
    }
    d["path_times"] = times;
    d["path_states"] = states;
    return d;
}

py::list catalog_py() {
    py::list out;
    for (const auto& n : catalog_names()) out.append(n);
    return out;
}

py::dict problem_info(const std::string& name, const Params& params) {
    auto p = builtin_problem(name, params);
    py::dict d;
    d["name"] = p.name;
    d["dim"] = p.spec.model.dim;
    d["t0"] = p.spec.t0;
    d["T"] = p.spec.T;
    d["epsilon"] = p.spec.epsilon;
    py::list x0;
    for (double v : p.spec.x0) x0.append(v);
    d["x0"] = x0;
    d["stopped"] = p.spec.cost.kind == TerminalCost::Kind::StoppedIndicator;
    d["has_subsolution"] = static_cast<bool>(p.subsolution);
    d["has_theta"] = p.ref.has_theta();
    d["has_G"] = p.ref.has_G();
    if (p.ref.has_G()) d["G"] = p.ref.G;
    py::dict pd;
    for (const auto& [k, v] : p.params) pd[py::str(k)] = v;
    d["params"] = pd;
    return d;
}

double reference_theta(const std::string& name, double eps, const Params& params) {
    auto p = builtin_problem(name, params);
    if (!p.ref.has_theta())
        throw ArgumentError("problem '" + name + "' has no closed-form theta");
    return p.ref.theta(eps);
}

py::dict estimate(const std::string& name, const std::string& control,
                  std::optional<double> eps, uint64_t n, double dt, uint64_t seed,
                  int threads, const std::vector<double>& control_values,
                  const Params& params) {
    auto p = resolve(name, params, eps);
    auto c = make_control(p, control, control_values);
    auto b = run_estimator(p.spec, c, make_sim(n, dt, seed, threads), control, name);
    auto d = batch_dict(b);
    d["epsilon"] = p.spec.epsilon;
    return d;
}

py::dict second_moment(const std::string& name, const std::string& control,
                       std::optional<double> eps, uint64_t n, double dt, uint64_t seed,
                       int threads, const std::vector<double>& control_values,
                       const Params& params) {
    auto p = resolve(name, params, eps);
    auto c = make_control(p, control, control_values);
    auto b = second_moment_direct(p.spec, c, make_sim(n, dt, seed, threads), control, name);
    auto d = batch_dict(b);
    d["epsilon"] = p.spec.epsilon;
    return d;
}

py::list sweep(const std::string& name, const std::vector<double>& eps_list,
               const std::string& control, uint64_t n, double dt, uint64_t seed,
               int threads, const std::vector<double>& control_values,
               const Params& params) {
    auto p = builtin_problem(name, params);
    auto c = make_control(p, control, control_values);
    auto table = epsilon_sweep(p.spec, c, make_sim(n, dt, seed, threads), eps_list,
                               control, name);
    py::list out;
    for (const auto& row : table.rows) {
        py::dict d;
        d["eps"] = row.eps;
        d["ok"] = row.ok;
        if (row.ok)
            d["batch"] = batch_dict(row.batch);
        else
            d["error"] = row.error;
        out.append(d);
    }
    return out;
}

SolverOptions make_action(int nodes, int max_iterations, double gradient_tolerance,
                          int restarts) {
    SolverOptions o;
    o.nodes = nodes;
    o.max_iterations = max_iterations;
    o.gradient_tolerance = gradient_tolerance;
    o.restarts = restarts;
    return o;
}

py::dict action_G(const std::string& name, std::optional<double> eps, const Params& params,
                  int nodes, int max_iterations, double gradient_tolerance, int restarts) {
    auto p = resolve(name, params, eps);
    return result_dict(
        solve_G(p.spec, make_action(nodes, max_iterations, gradient_tolerance, restarts)));
}

py::dict action_v0(const std::string& name, const std::string& control,
                   std::optional<double> eps, const std::vector<double>& control_values,
                   const Params& params, int nodes, int max_iterations,
                   double gradient_tolerance, int restarts) {
    auto p = resolve(name, params, eps);
    auto c = make_control(p, control, control_values);
    return result_dict(solve_v0(
        p.spec, c, make_action(nodes, max_iterations, gradient_tolerance, restarts)));
}

py::dict expansion(const std::string& name, const std::string& control,
                   const std::vector<double>& eps_list, bool with_mc, bool with_pde,
                   uint64_t n, double dt, uint64_t seed, int threads, int steps,
                   const std::vector<double>& control_values, const Params& params) {
    auto p = builtin_problem(name, params);
    auto c = make_control(p, control, control_values);
    ExpansionOptions o;
    o.eps_list = eps_list;
    o.with_mc = with_mc;
    o.with_pde = with_pde;
    o.pde_auto_grid = true;
    o.sim = make_sim(n, dt, seed, threads);
    o.steps = steps;
    auto rep = expansion_report(p.spec, c, o, control, name);
    py::dict d;
    d["expansion_available"] = rep.expansion_available;
    d["v0"] = rep.v0;
    d["v1"] = rep.v1;
    d["v1_negative_flag"] = rep.v1_negative_flag;
    d["characteristic_warning"] = rep.characteristic_warning;
    py::list rows;
    for (const auto& r : rep.rows) {
        py::dict rd;
        rd["eps"] = r.eps;
        rd["have_mc"] = r.have_mc;
        rd["mc_rate"] = r.mc_rate;
        rd["mc_se"] = r.mc_se;
        rd["have_pde"] = r.have_pde;
        rd["pde_psi"] = r.pde_psi;
        rd["expansion"] = r.expansion;
        rd["residual"] = r.residual;
        rd["order_estimate"] = r.order_estimate;
        rd["note"] = r.note;
        rows.append(rd);
    }
    d["rows"] = rows;
    return d;
}

py::dict pde(const std::string& name, const std::string& kind, const std::string& control,
             std::optional<double> eps, const std::vector<double>& control_values,
             const Params& params, std::optional<double> x_min, std::optional<double> x_max,
             int nx, int nt, const std::vector<std::pair<double, double>>& query) {
    auto p = resolve(name, params, eps);
    auto c = make_control(p, control, control_values);
    Grid1D g = default_grid(p.spec, c, kind == "phi" ? PdeKind::Phi : PdeKind::Psi);
    if (x_min) g.x_min = *x_min;
    if (x_max) g.x_max = *x_max;
    if (nx > 0) g.nx = nx;
    if (nt > 0) g.nt = nt;
    PdeSolution1D sol = kind == "psi"  ? solve_psi(p.spec, c, g)
                        : kind == "phi" ? solve_phi(p.spec, c, g)
                        : kind == "v0"  ? solve_v0_hjb(p.spec, c, g)
                                        : throw ArgumentError("unknown pde kind '" + kind +
                                                              "' (psi|phi|v0)");
    py::dict d;
    d["kind"] = kind;
    d["value_at_start"] = sol.value_at(p.spec.t0, p.spec.x0[0]);
    d["substeps"] = sol.substeps;
    py::dict gd;
    gd["x_min"] = g.x_min;
    gd["x_max"] = g.x_max;
    gd["nx"] = g.nx;
    gd["nt"] = g.nt;
    d["grid"] = gd;
    py::list vals;
    for (const auto& [t, x] : query) vals.append(sol.value_at(t, x));
    d["values"] = vals;
    return d;
}

py::dict check(const std::string& name, const Params& params, int t_points, int x_points,
               double tolerance, std::optional<std::vector<double>> box_lo,
               std::optional<std::vector<double>> box_hi) {
    auto p = builtin_problem(name, params);
    if (!p.subsolution)
        throw ArgumentError("problem '" + name + "' has no catalog subsolution");
    SubsolutionCheckOptions o;
    o.t_points = t_points;
    o.x_points = x_points;
    o.tolerance = tolerance;
    if (box_lo && box_hi) {
        o.box_lo = *box_lo;
        o.box_hi = *box_hi;
    } else {
        double x0 = p.spec.x0[0];
        double w = 4.0 * std::max(1.0, std::fabs(x0));
        o.box_lo = {x0 - w};
        o.box_hi = {x0 + w};
    }
    auto r = check_subsolution(p.spec, *p.subsolution, o);
    py::dict d;
    d["pass"] = r.pass;
    d["min_interior_residual"] = r.min_interior_residual;
    d["max_terminal_excess"] = r.max_terminal_excess;
    d["interior_samples"] = r.interior_samples;
    d["terminal_samples"] = r.terminal_samples;
    return d;
}

} // namespace

PYBIND11_MODULE(_isdiff, m) {
    m.doc() = "importance sampling estimators for small-noise diffusions";

    py::register_exception<ArgumentError>(m, "ArgumentError", PyExc_ValueError);
    py::register_exception<CatalogError>(m, "CatalogError", PyExc_KeyError);

    m.def("catalog", &catalog_py, "catalog problem names");
    m.def("problem_info", &problem_info, py::arg("name"), py::arg("params") = Params{});
    m.def("reference_theta", &reference_theta, py::arg("name"), py::arg("eps"),
          py::arg("params") = Params{});

    m.def("estimate", &estimate, py::arg("name"), py::arg("control") = "zero",
          py::arg("eps") = std::nullopt, py::arg("n") = 10000, py::arg("dt") = 1e-3,
          py::arg("seed") = 0, py::arg("threads") = 1,
          py::arg("control_values") = std::vector<double>{}, py::arg("params") = Params{});
    m.def("second_moment", &second_moment, py::arg("name"), py::arg("control") = "zero",
          py::arg("eps") = std::nullopt, py::arg("n") = 10000, py::arg("dt") = 1e-3,
          py::arg("seed") = 0, py::arg("threads") = 1,
          py::arg("control_values") = std::vector<double>{}, py::arg("params") = Params{});
    m.def("sweep", &sweep, py::arg("name"), py::arg("eps_list"), py::arg("control") = "zero",
          py::arg("n") = 10000, py::arg("dt") = 1e-3, py::arg("seed") = 0,
          py::arg("threads") = 1, py::arg("control_values") = std::vector<double>{},
          py::arg("params") = Params{});

    m.def("solve_G", &action_G, py::arg("name"), py::arg("eps") = std::nullopt,
          py::arg("params") = Params{}, py::arg("nodes") = 200,
          py::arg("max_iterations") = 500, py::arg("gradient_tolerance") = 1e-8,
          py::arg("restarts") = 5);
    m.def("solve_v0", &action_v0, py::arg("name"), py::arg("control") = "zero",
          py::arg("eps") = std::nullopt, py::arg("control_values") = std::vector<double>{},
          py::arg("params") = Params{}, py::arg("nodes") = 200,
          py::arg("max_iterations") = 500, py::arg("gradient_tolerance") = 1e-8,
          py::arg("restarts") = 5);

    m.def("expansion", &expansion, py::arg("name"), py::arg("control") = "zero",
          py::arg("eps_list") = std::vector<double>{0.5, 0.25},
          py::arg("with_mc") = false, py::arg("with_pde") = false, py::arg("n") = 10000,
          py::arg("dt") = 1e-3, py::arg("seed") = 0, py::arg("threads") = 1,
          py::arg("steps") = 400, py::arg("control_values") = std::vector<double>{},
          py::arg("params") = Params{});

    m.def("pde", &pde, py::arg("name"), py::arg("kind") = "psi", py::arg("control") = "zero",
          py::arg("eps") = std::nullopt, py::arg("control_values") = std::vector<double>{},
          py::arg("params") = Params{}, py::arg("x_min") = std::nullopt,
          py::arg("x_max") = std::nullopt, py::arg("nx") = 0, py::arg("nt") = 0,
          py::arg("query") = std::vector<std::pair<double, double>>{});

    m.def("check", &check, py::arg("name"), py::arg("params") = Params{},
          py::arg("t_points") = 21, py::arg("x_points") = 101,
          py::arg("tolerance") = 1e-8, py::arg("box_lo") = std::nullopt,
          py::arg("box_hi") = std::nullopt);
}
