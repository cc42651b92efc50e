#include "config.hpp"

#include <fstream>
#include <set>

#include "isdiff/errors.hpp"

namespace isdiff::cli {

using nlohmann::json;

namespace {

void check_keys(const json& j, const std::string& path, std::set<std::string> allowed) {
    if (!j.is_object()) throw ConfigError(path + ": expected an object");
    for (const auto& [k, v] : j.items())
        if (!allowed.count(k))
            throw ConfigError(path + ": unknown key '" + k + "'");
}

double as_number(const json& j, const std::string& path) {
    if (!j.is_number()) throw ConfigError(path + ": expected a number");
    return j.get<double>();
}

double get_number(const json& j, const std::string& path, const std::string& key,
                  double fallback) {
    if (!j.contains(key)) return fallback;
    return as_number(j.at(key), path + "." + key);
}

int64_t get_integer(const json& j, const std::string& path, const std::string& key,
                    int64_t fallback) {
    if (!j.contains(key)) return fallback;
    const json& v = j.at(key);
    if (v.is_number_integer() || v.is_number_unsigned()) return v.get<int64_t>();
    if (v.is_number_float()) {
        double d = v.get<double>();
        if (d == static_cast<int64_t>(d)) return static_cast<int64_t>(d);
    }
    throw ConfigError(path + "." + key + ": expected an integer");
}

bool get_bool(const json& j, const std::string& path, const std::string& key, bool fallback) {
    if (!j.contains(key)) return fallback;
    const json& v = j.at(key);
    if (!v.is_boolean()) throw ConfigError(path + "." + key + ": expected a boolean");
    return v.get<bool>();
}

std::string get_string(const json& j, const std::string& path, const std::string& key,
                       const std::string& fallback) {
    if (!j.contains(key)) return fallback;
    const json& v = j.at(key);
    if (!v.is_string()) throw ConfigError(path + "." + key + ": expected a string");
    return v.get<std::string>();
}

Vec as_vec(const json& j, const std::string& path) {
    if (!j.is_array() || j.empty()) throw ConfigError(path + ": expected a nonempty array");
    Vec out;
    for (size_t i = 0; i < j.size(); ++i) out.push_back(as_number(j[i], path));
    return out;
}

ControlChoice parse_control(const json& j, const std::string& path) {
    check_keys(j, path, {"kind", "value", "label"});
    ControlChoice c;
    std::string kind = get_string(j, path, "kind", "");
    if (kind == "zero")
        c.kind = ControlChoice::Kind::Zero;
    else if (kind == "subsolution")
        c.kind = ControlChoice::Kind::FromSubsolution;
    else if (kind == "constant")
        c.kind = ControlChoice::Kind::Constant;
    else
        throw ConfigError(path + ".kind: expected one of zero, subsolution, constant");
    if (c.kind == ControlChoice::Kind::Constant) {
        if (!j.contains("value"))
            throw ConfigError(path + ": constant controls need a 'value' array");
        c.value = as_vec(j.at("value"), path + ".value");
    } else if (j.contains("value")) {
        throw ConfigError(path + ".value: only constant controls take a value");
    }
    c.label = get_string(j, path, "label", kind);
    return c;
}

void parse_box(const json& j, const std::string& path, int dim, Vec& lo, Vec& hi) {
    check_keys(j, path, {"lo", "hi"});
    if (!j.contains("lo") || !j.contains("hi"))
        throw ConfigError(path + ": box needs 'lo' and 'hi' arrays");
    lo = as_vec(j.at("lo"), path + ".lo");
    hi = as_vec(j.at("hi"), path + ".hi");
    if (static_cast<int>(lo.size()) != dim || static_cast<int>(hi.size()) != dim)
        throw ConfigError(path + ": box arrays must have the problem dimension");
    for (int i = 0; i < dim; ++i)
        if (!(lo[i] < hi[i])) throw ConfigError(path + ": box must have lo < hi");
}

}  // namespace

ExperimentConfig parse_config_json(const json& doc) {
    check_keys(doc, "config",
               {"problem", "control", "controls", "epsilons", "simulation", "action",
                "expansion", "pde", "check", "compare", "output"});
    if (!doc.contains("problem")) throw ConfigError("config: missing 'problem'");

    ExperimentConfig cfg;
    cfg.echo = doc;

    const json& pj = doc.at("problem");
    check_keys(pj, "problem", {"name", "params"});
    std::string name = get_string(pj, "problem", "name", "");
    if (name.empty()) throw ConfigError("problem.name: required");
    std::map<std::string, double> params;
    if (pj.contains("params")) {
        const json& prm = pj.at("params");
        if (!prm.is_object()) throw ConfigError("problem.params: expected an object");
        for (const auto& [k, v] : prm.items())
            params[k] = as_number(v, "problem.params." + k);
    }
    try {
        cfg.problem = builtin_problem(name, params);
    } catch (const CatalogError& e) {
        throw ConfigError(std::string("problem: ") + e.what());
    }
    const int dim = cfg.problem.spec.model.dim;

    if (doc.contains("control") && doc.contains("controls"))
        throw ConfigError("config: give either 'control' or 'controls', not both");
    if (doc.contains("control")) {
        cfg.controls.push_back(parse_control(doc.at("control"), "control"));
    } else if (doc.contains("controls")) {
        const json& cj = doc.at("controls");
        if (!cj.is_array() || cj.empty())
            throw ConfigError("controls: expected a nonempty array");
        for (size_t i = 0; i < cj.size(); ++i)
            cfg.controls.push_back(parse_control(cj[i], "controls[" + std::to_string(i) + "]"));
    } else {
        cfg.controls.push_back({ControlChoice::Kind::Zero, {}, "zero"});
    }
    for (const auto& c : cfg.controls)
        if (c.kind == ControlChoice::Kind::Constant &&
            static_cast<int>(c.value.size()) != dim)
            throw ConfigError("control value dimension mismatch (problem dim " +
                              std::to_string(dim) + ")");

    if (doc.contains("epsilons")) {
        const json& ej = doc.at("epsilons");
        if (!ej.is_array() || ej.empty())
            throw ConfigError("epsilons: expected a nonempty array");
        for (size_t i = 0; i < ej.size(); ++i) {
            double e = as_number(ej[i], "epsilons[" + std::to_string(i) + "]");
            if (!(e > 0.0)) throw ConfigError("epsilons: values must be positive");
            cfg.epsilons.push_back(e);
        }
    } else {
        cfg.epsilons = {cfg.problem.spec.epsilon};
    }

    if (doc.contains("simulation")) {
        const json& sj = doc.at("simulation");
        check_keys(sj, "simulation", {"dt", "n_samples", "seed", "threads", "stop_at_exit"});
        cfg.sim.dt = get_number(sj, "simulation", "dt", cfg.sim.dt);
        if (!(cfg.sim.dt > 0.0)) throw ConfigError("simulation.dt: must be positive");
        int64_t n = get_integer(sj, "simulation", "n_samples",
                                static_cast<int64_t>(cfg.sim.n_samples));
        if (n <= 0) throw ConfigError("simulation.n_samples: must be positive");
        cfg.sim.n_samples = static_cast<uint64_t>(n);
        int64_t seed = get_integer(sj, "simulation", "seed", static_cast<int64_t>(cfg.sim.seed));
        cfg.sim.seed = static_cast<uint64_t>(seed);
        int64_t threads = get_integer(sj, "simulation", "threads", cfg.sim.threads);
        if (threads < 1 || threads > 4096)
            throw ConfigError("simulation.threads: expected 1..4096");
        cfg.sim.threads = static_cast<int>(threads);
        cfg.sim.stop_at_exit = get_bool(sj, "simulation", "stop_at_exit", cfg.sim.stop_at_exit);
    }

    if (doc.contains("action")) {
        const json& aj = doc.at("action");
        check_keys(aj, "action",
                   {"nodes", "max_iterations", "gradient_tolerance", "restarts"});
        cfg.action.nodes = static_cast<int>(get_integer(aj, "action", "nodes", cfg.action.nodes));
        if (cfg.action.nodes < 2 || cfg.action.nodes > 100000)
            throw ConfigError("action.nodes: expected 2..100000");
        cfg.action.max_iterations = static_cast<int>(
            get_integer(aj, "action", "max_iterations", cfg.action.max_iterations));
        if (cfg.action.max_iterations < 1)
            throw ConfigError("action.max_iterations: must be positive");
        cfg.action.gradient_tolerance =
            get_number(aj, "action", "gradient_tolerance", cfg.action.gradient_tolerance);
        if (!(cfg.action.gradient_tolerance > 0.0))
            throw ConfigError("action.gradient_tolerance: must be positive");
        cfg.action.restarts =
            static_cast<int>(get_integer(aj, "action", "restarts", cfg.action.restarts));
        if (cfg.action.restarts < 1 || cfg.action.restarts > 100)
            throw ConfigError("action.restarts: expected 1..100");
    }

    if (doc.contains("expansion")) {
        const json& xj = doc.at("expansion");
        check_keys(xj, "expansion", {"steps", "with_mc", "box"});
        cfg.expansion.steps =
            static_cast<int>(get_integer(xj, "expansion", "steps", cfg.expansion.steps));
        if (cfg.expansion.steps < 1 || cfg.expansion.steps > 1000000)
            throw ConfigError("expansion.steps: expected 1..1000000");
        cfg.expansion.with_mc = get_bool(xj, "expansion", "with_mc", cfg.expansion.with_mc);
        if (xj.contains("box")) {
            parse_box(xj.at("box"), "expansion.box", dim, cfg.expansion.box_lo,
                      cfg.expansion.box_hi);
            cfg.expansion.have_box = true;
        }
    }

    if (doc.contains("pde")) {
        const json& gj = doc.at("pde");
        check_keys(gj, "pde", {"x_min", "x_max", "nx", "nt", "solve"});
        bool have_domain = gj.contains("x_min") || gj.contains("x_max");
        cfg.pde.grid.x_min = get_number(gj, "pde", "x_min", cfg.pde.grid.x_min);
        cfg.pde.grid.x_max = get_number(gj, "pde", "x_max", cfg.pde.grid.x_max);
        cfg.pde.grid.nx = static_cast<int>(get_integer(gj, "pde", "nx", cfg.pde.grid.nx));
        cfg.pde.grid.nt = static_cast<int>(get_integer(gj, "pde", "nt", cfg.pde.grid.nt));
        if (cfg.pde.grid.nx < 5 || cfg.pde.grid.nx > 100000)
            throw ConfigError("pde.nx: expected 5..100000");
        if (cfg.pde.grid.nt < 1 || cfg.pde.grid.nt > 10000000)
            throw ConfigError("pde.nt: expected 1..10000000");
        if (have_domain) {
            if (!(cfg.pde.grid.x_max > cfg.pde.grid.x_min))
                throw ConfigError("pde: x_max must exceed x_min");
            cfg.pde.auto_grid = false;
        }
        if (gj.contains("solve")) {
            const json& sv = gj.at("solve");
            if (!sv.is_array() || sv.empty())
                throw ConfigError("pde.solve: expected a nonempty array");
            cfg.pde.solve.clear();
            for (size_t i = 0; i < sv.size(); ++i) {
                if (!sv[i].is_string())
                    throw ConfigError("pde.solve: expected strings");
                std::string s = sv[i].get<std::string>();
                if (s != "psi" && s != "phi" && s != "v0")
                    throw ConfigError("pde.solve: expected psi, phi, or v0; got '" + s + "'");
                cfg.pde.solve.push_back(s);
            }
        }
    }

    if (doc.contains("check")) {
        const json& kj = doc.at("check");
        check_keys(kj, "check", {"t_points", "x_points", "tolerance", "box"});
        cfg.check.t_points =
            static_cast<int>(get_integer(kj, "check", "t_points", cfg.check.t_points));
        cfg.check.x_points =
            static_cast<int>(get_integer(kj, "check", "x_points", cfg.check.x_points));
        if (cfg.check.t_points < 2 || cfg.check.x_points < 2)
            throw ConfigError("check: t_points and x_points must be at least 2");
        cfg.check.tolerance = get_number(kj, "check", "tolerance", cfg.check.tolerance);
        if (!(cfg.check.tolerance > 0.0))
            throw ConfigError("check.tolerance: must be positive");
        if (kj.contains("box")) {
            parse_box(kj.at("box"), "check.box", dim, cfg.check.box_lo, cfg.check.box_hi);
            cfg.check.have_box = true;
        }
    }

    if (doc.contains("compare")) {
        const json& cj = doc.at("compare");
        check_keys(cj, "compare", {"with_expansion"});
        cfg.compare_with_expansion =
            get_bool(cj, "compare", "with_expansion", cfg.compare_with_expansion);
    }

    if (doc.contains("output")) {
        const json& oj = doc.at("output");
        check_keys(oj, "output", {"dir"});
        cfg.out_dir = get_string(oj, "output", "dir", cfg.out_dir);
        if (cfg.out_dir.empty()) throw ConfigError("output.dir: must be nonempty");
    }

    return cfg;
}

ExperimentConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("config parse error in " + path + ": " + e.what());
    }
    return parse_config_json(doc);
}

ControlPolicy make_policy(const BuiltinProblem& bp, const ControlChoice& choice) {
    switch (choice.kind) {
        case ControlChoice::Kind::Zero:
            return zero_control(bp.spec.model.dim);
        case ControlChoice::Kind::FromSubsolution:
            if (!bp.subsolution)
                throw ConfigError("problem '" + bp.name + "' has no attached subsolution");
            return control_from_subsolution(bp.spec.model, *bp.subsolution);
        case ControlChoice::Kind::Constant:
            return constant_control(choice.value);
    }
    throw ConfigError("unreachable control kind");
}

}  // namespace isdiff::cli
