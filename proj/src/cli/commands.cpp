#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include "config.hpp"
#include "isdiff/errors.hpp"
#include "isdiff/expansion.hpp"

namespace isdiff::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string fmt(uint64_t v) { return std::to_string(v); }

std::string now_utc() {
    std::time_t t = std::time(nullptr);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

// buffered write then rename, so failed runs leave no partial files
void write_file(const fs::path& dir, const std::string& name, const std::string& content) {
    fs::path tmp = dir / (name + ".tmp");
    fs::path dst = dir / name;
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open for writing: " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw Error("write failed: " + tmp.string());
    out.close();
    std::error_code ec;
    fs::rename(tmp, dst, ec);
    if (ec) throw Error("rename failed: " + dst.string() + " (" + ec.message() + ")");
}

struct RunContext {
    ExperimentConfig cfg;
    fs::path out_dir;
    json tasks = json::array();
    std::vector<std::string> outputs;
    json extra = json::object();
    bool any_task_failed = false;
    bool any_task_ok = false;

    void task_ok(const std::string& name) {
        tasks.push_back({{"name", name}, {"status", "ok"}});
        any_task_ok = true;
    }
    void task_error(const std::string& name, const std::string& what) {
        tasks.push_back({{"name", name}, {"status", "error"}, {"error", what}});
        any_task_failed = true;
    }
};

void write_manifest(RunContext& ctx, const std::string& command) {
    json m;
    m["tool"] = "isdiff";
    m["version"] = kVersion;
    m["command"] = command;
    m["created_utc"] = now_utc();  // timestamps live only in the manifest
    m["seed"] = ctx.cfg.sim.seed;
    m["threads"] = ctx.cfg.sim.threads;
    m["config"] = ctx.cfg.echo;
    m["outputs"] = ctx.outputs;
    m["tasks"] = ctx.tasks;
    if (!ctx.extra.empty()) m["results"] = ctx.extra;
    write_file(ctx.out_dir, "manifest.json", m.dump(2) + "\n");
}

int run_command(const std::string& config_path, const CliOverrides& ov,
                const std::string& command,
                const std::function<int(RunContext&)>& body) {
    RunContext ctx;
    try {
        ctx.cfg = parse_config_file(config_path);
        if (ov.out_dir) ctx.cfg.out_dir = *ov.out_dir;
        if (ov.seed) ctx.cfg.sim.seed = *ov.seed;
        if (ov.threads) ctx.cfg.sim.threads = *ov.threads;
    } catch (const std::exception& e) {
        std::cerr << "isdiff " << command << ": " << e.what() << "\n";
        return 1;
    }
    try {
        ctx.out_dir = ctx.cfg.out_dir;
        fs::create_directories(ctx.out_dir);
        int rc = body(ctx);
        write_manifest(ctx, command);
        return rc;
    } catch (const ConfigError& e) {
        std::cerr << "isdiff " << command << ": " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "isdiff " << command << ": " << e.what() << "\n";
        return 2;
    }
}

// one CSV row of estimator statistics; the direct variant estimates only Q
std::string estimator_row(const ExperimentConfig& cfg, const std::string& control_label,
                          const std::string& variant, double eps, const EstimatorBatch& b) {
    std::ostringstream os;
    os << cfg.problem.name << "," << control_label << "," << variant << "," << fmt(eps) << ","
       << fmt(cfg.sim.dt) << "," << b.n << ",";
    if (variant == "is") {
        os << fmt(b.mean()) << "," << fmt(b.std_error_mean()) << "," << fmt(b.second_moment())
           << "," << fmt(b.se_second_moment()) << "," << fmt(b.relative_error()) << ","
           << fmt(b.se_relative_error()) << "," << fmt(b.minus_eps_log_q());
    } else {
        // reversed-measure route: the batch mean estimates Q directly
        double q = b.mean();
        double se_q = b.std_error_mean();
        double rate = b.degenerate() ? std::numeric_limits<double>::infinity()
                                     : -eps * b.log_mean();
        os << fmt(kNaN) << "," << fmt(kNaN) << "," << fmt(q) << "," << fmt(se_q) << ","
           << fmt(kNaN) << "," << fmt(kNaN) << "," << fmt(rate);
    }
    os << "," << (b.degenerate() ? 1 : 0) << "," << fmt(cfg.sim.seed);
    return os.str();
}

constexpr const char* kEstimateHeader =
    "problem,control,estimator,eps,dt,n,theta_hat,se_theta,Q_hat,se_Q,rel_err,se_rel_err,"
    "minus_eps_logQ,degenerate,seed";

ExpansionOptions expansion_options(const ExperimentConfig& cfg) {
    ExpansionOptions opts;
    opts.eps_list = cfg.epsilons;
    opts.sim = cfg.sim;
    opts.action = cfg.action;
    opts.steps = cfg.expansion.steps;
    opts.with_mc = cfg.expansion.with_mc;
    if (cfg.expansion.have_box) {
        opts.box_lo = cfg.expansion.box_lo;
        opts.box_hi = cfg.expansion.box_hi;
    }
    opts.with_pde = cfg.problem.spec.model.dim == 1 && !cfg.problem.spec.cost.stopped();
    opts.pde_auto_grid = cfg.pde.auto_grid;
    opts.pde_grid = cfg.pde.grid;
    return opts;
}

}  // namespace

int cmd_estimate(const std::string& config_path, const CliOverrides& ov) {
    return run_command(config_path, ov, "estimate", [](RunContext& ctx) {
        const ExperimentConfig& cfg = ctx.cfg;
        ControlPolicy policy = make_policy(cfg.problem, cfg.controls[0]);
        const std::string& label = cfg.controls[0].label;

        std::ostringstream csv;
        csv << kEstimateHeader << "\n";
        for (size_t r = 0; r < cfg.epsilons.size(); ++r) {
            double eps = cfg.epsilons[r];
            ProblemSpec spec = cfg.problem.spec;
            spec.epsilon = eps;
            std::string tag = "eps=" + fmt(eps);
            try {
                EstimatorBatch b = run_estimator(spec, policy, cfg.sim, label,
                                                 cfg.problem.name, kStreamSweepBase + 2 * r);
                csv << estimator_row(cfg, label, "is", eps, b) << "\n";
                ctx.task_ok(tag + " is");
            } catch (const std::exception& e) {
                ctx.task_error(tag + " is", e.what());
            }
            try {
                EstimatorBatch b =
                    second_moment_direct(spec, policy, cfg.sim, label, cfg.problem.name,
                                         kStreamSweepBase + 2 * r + 1);
                csv << estimator_row(cfg, label, "direct", eps, b) << "\n";
                ctx.task_ok(tag + " direct");
            } catch (const std::exception& e) {
                ctx.task_error(tag + " direct", e.what());
            }
        }
        write_file(ctx.out_dir, "estimate.csv", csv.str());
        ctx.outputs.push_back("estimate.csv");
        std::cout << "wrote " << (ctx.out_dir / "estimate.csv").string() << "\n";
        return ctx.any_task_failed ? 2 : 0;
    });
}

int cmd_expand(const std::string& config_path, const CliOverrides& ov) {
    return run_command(config_path, ov, "expand", [](RunContext& ctx) {
        const ExperimentConfig& cfg = ctx.cfg;
        ControlPolicy policy = make_policy(cfg.problem, cfg.controls[0]);
        ExpansionOptions opts = expansion_options(cfg);

        ExpansionReport rep =
            expansion_report(cfg.problem.spec, policy, opts, cfg.controls[0].label,
                             cfg.problem.name);

        std::ostringstream csv;
        csv << "eps,mc_rate,mc_se,pde_psi,expansion,residual,order_estimate,v0,v1,"
               "v1_negative_flag,characteristic_warning,note\n";
        for (const auto& row : rep.rows) {
            csv << fmt(row.eps) << "," << fmt(row.have_mc ? row.mc_rate : kNaN) << ","
                << fmt(row.have_mc ? row.mc_se : kNaN) << ","
                << fmt(row.have_pde ? row.pde_psi : kNaN) << "," << fmt(row.expansion) << ","
                << fmt(row.residual) << "," << fmt(row.order_estimate) << "," << fmt(rep.v0)
                << "," << fmt(rep.v1) << "," << (rep.v1_negative_flag ? 1 : 0) << ","
                << (rep.characteristic_warning ? 1 : 0) << ",\"" << row.note << "\"\n";
            if (row.note.empty())
                ctx.task_ok("eps=" + fmt(row.eps));
            else
                ctx.task_error("eps=" + fmt(row.eps), row.note);
        }
        write_file(ctx.out_dir, "expand.csv", csv.str());
        ctx.outputs.push_back("expand.csv");
        ctx.extra["expansion_available"] = rep.expansion_available;
        if (rep.expansion_available) {
            ctx.extra["v0"] = rep.v0;
            ctx.extra["v1"] = rep.v1;
            ctx.extra["v1_negative_flag"] = rep.v1_negative_flag;
            ctx.extra["characteristic_warning"] = rep.characteristic_warning;
            std::cout << "v0 = " << fmt(rep.v0) << ", v1 = " << fmt(rep.v1);
            if (rep.v1_negative_flag) std::cout << "  [v1 < 0 with v0 > 0]";
            if (rep.characteristic_warning) std::cout << "  [characteristic left the box]";
            std::cout << "\n";
        } else {
            std::cout << "expansion unavailable (stopped cost); Monte Carlo columns only\n";
        }
        std::cout << "wrote " << (ctx.out_dir / "expand.csv").string() << "\n";
        return ctx.any_task_failed ? 2 : 0;
    });
}

int cmd_check(const std::string& config_path, const CliOverrides& ov) {
    return run_command(config_path, ov, "check", [](RunContext& ctx) {
        const ExperimentConfig& cfg = ctx.cfg;
        if (!cfg.problem.subsolution)
            throw ConfigError("problem '" + cfg.problem.name + "' has no attached subsolution");

        SubsolutionCheckOptions opts;
        opts.t_points = cfg.check.t_points;
        opts.x_points = cfg.check.x_points;
        opts.tolerance = cfg.check.tolerance;
        if (cfg.check.have_box) {
            opts.box_lo = cfg.check.box_lo;
            opts.box_hi = cfg.check.box_hi;
        } else {
            int d = cfg.problem.spec.model.dim;
            opts.box_lo.resize(d);
            opts.box_hi.resize(d);
            for (int i = 0; i < d; ++i) {
                double c = cfg.problem.spec.x0[i];
                double r = 4.0 * std::max(1.0, std::abs(c));
                opts.box_lo[i] = c - r;
                opts.box_hi[i] = c + r;
            }
        }

        SubsolutionReport rep = check_subsolution(cfg.problem.spec, *cfg.problem.subsolution, opts);

        std::ostringstream csv;
        csv << "quantity,value\n";
        csv << "min_interior_residual," << fmt(rep.min_interior_residual) << "\n";
        csv << "max_terminal_excess," << fmt(rep.max_terminal_excess) << "\n";
        csv << "interior_samples," << rep.interior_samples << "\n";
        csv << "terminal_samples," << rep.terminal_samples << "\n";
        csv << "pass," << (rep.pass ? 1 : 0) << "\n";
        write_file(ctx.out_dir, "check.csv", csv.str());
        ctx.outputs.push_back("check.csv");
        ctx.extra["pass"] = rep.pass;
        ctx.extra["min_interior_residual"] = rep.min_interior_residual;
        ctx.extra["max_terminal_excess"] = rep.max_terminal_excess;
        if (rep.pass)
            ctx.task_ok("subsolution check");
        else
            ctx.task_error("subsolution check", "inequality violated");
        std::cout << "subsolution check: " << (rep.pass ? "PASS" : "FAIL")
                  << " (min interior residual " << fmt(rep.min_interior_residual)
                  << ", max terminal excess " << fmt(rep.max_terminal_excess) << ")\n";
        ctx.any_task_failed = false;  // FAIL is a verdict, not a runtime error
        return rep.pass ? 0 : 3;
    });
}

int cmd_compare(const std::string& config_path, const CliOverrides& ov) {
    return run_command(config_path, ov, "compare", [](RunContext& ctx) {
        const ExperimentConfig& cfg = ctx.cfg;
        if (cfg.controls.size() < 2)
            throw ConfigError("compare needs at least two controls");
        for (size_t i = 0; i < cfg.controls.size(); ++i)
            for (size_t j = i + 1; j < cfg.controls.size(); ++j)
                if (cfg.controls[i].label == cfg.controls[j].label)
                    throw ConfigError("compare: duplicate control label '" +
                                      cfg.controls[i].label + "'");

        const size_t neps = cfg.epsilons.size();
        const bool smooth = !cfg.problem.spec.cost.stopped();

        struct Cell {
            bool ok = false;
            EstimatorBatch batch;
            std::string error;
        };
        std::vector<std::vector<Cell>> cells(cfg.controls.size(), std::vector<Cell>(neps));
        std::vector<double> v0s(cfg.controls.size(), kNaN), v1s(cfg.controls.size(), kNaN);

        for (size_t c = 0; c < cfg.controls.size(); ++c) {
            ControlPolicy policy = make_policy(cfg.problem, cfg.controls[c]);
            for (size_t r = 0; r < neps; ++r) {
                ProblemSpec spec = cfg.problem.spec;
                spec.epsilon = cfg.epsilons[r];
                std::string tag =
                    cfg.controls[c].label + " eps=" + fmt(cfg.epsilons[r]);
                try {
                    cells[c][r].batch = run_estimator(
                        spec, policy, cfg.sim, cfg.controls[c].label, cfg.problem.name,
                        kStreamSweepBase + 2 * (c * neps + r));
                    cells[c][r].ok = true;
                    ctx.task_ok(tag);
                } catch (const std::exception& e) {
                    cells[c][r].error = e.what();
                    ctx.task_error(tag, e.what());
                }
            }
            if (smooth && cfg.compare_with_expansion) {
                try {
                    ExpansionOptions opts = expansion_options(cfg);
                    opts.with_mc = false;
                    opts.with_pde = false;
                    ExpansionReport rep =
                        expansion_report(cfg.problem.spec, policy, opts,
                                         cfg.controls[c].label, cfg.problem.name);
                    v0s[c] = rep.v0;
                    v1s[c] = rep.v1;
                } catch (const std::exception& e) {
                    // optional column; record a warning, keep the table
                    ctx.tasks.push_back({{"name", cfg.controls[c].label + " expansion"},
                                         {"status", "warning"},
                                         {"error", e.what()}});
                }
            }
        }

        // rank controls inside each eps group by per-sample relative error
        std::ostringstream csv;
        csv << kEstimateHeader << ",v0_plus_eps_v1,rank\n";
        for (size_t r = 0; r < neps; ++r) {
            std::vector<size_t> order;
            for (size_t c = 0; c < cfg.controls.size(); ++c)
                if (cells[c][r].ok) order.push_back(c);
            std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
                double ra = cells[a][r].batch.relative_error();
                double rb = cells[b][r].batch.relative_error();
                bool da = cells[a][r].batch.degenerate() || std::isnan(ra);
                bool db = cells[b][r].batch.degenerate() || std::isnan(rb);
                if (da != db) return db;
                if (da && db) return false;
                return ra < rb;
            });
            std::vector<int> rank(cfg.controls.size(), -1);
            for (size_t pos = 0; pos < order.size(); ++pos)
                rank[order[pos]] = static_cast<int>(pos + 1);
            for (size_t c = 0; c < cfg.controls.size(); ++c) {
                if (!cells[c][r].ok) continue;
                double vexp = std::isnan(v0s[c]) ? kNaN : v0s[c] + cfg.epsilons[r] * v1s[c];
                csv << estimator_row(cfg, cfg.controls[c].label, "is", cfg.epsilons[r],
                                     cells[c][r].batch)
                    << "," << fmt(vexp) << "," << rank[c] << "\n";
            }
            if (!order.empty()) {
                std::cout << "eps=" << fmt(cfg.epsilons[r]) << ": best control '"
                          << cfg.controls[order[0]].label << "'\n";
            }
        }
        write_file(ctx.out_dir, "compare.csv", csv.str());
        ctx.outputs.push_back("compare.csv");
        std::cout << "wrote " << (ctx.out_dir / "compare.csv").string() << "\n";
        return ctx.any_task_failed ? 2 : 0;
    });
}

int cmd_pde(const std::string& config_path, const CliOverrides& ov) {
    return run_command(config_path, ov, "pde", [](RunContext& ctx) {
        const ExperimentConfig& cfg = ctx.cfg;
        ControlPolicy policy = make_policy(cfg.problem, cfg.controls[0]);
        ProblemSpec spec = cfg.problem.spec;
        spec.epsilon = cfg.epsilons[0];

        bool wants_phi = std::find(cfg.pde.solve.begin(), cfg.pde.solve.end(), "phi") !=
                         cfg.pde.solve.end();
        Grid1D grid = cfg.pde.auto_grid
                          ? default_grid(spec, policy,
                                         wants_phi ? PdeKind::Phi : PdeKind::Psi)
                          : cfg.pde.grid;
        for (const std::string& kind : cfg.pde.solve) {
            std::string file = "pde_" + kind + ".csv";
            try {
                PdeSolution1D sol = kind == "psi"  ? solve_psi(spec, policy, grid)
                                    : kind == "phi" ? solve_phi(spec, policy, grid)
                                                    : solve_v0_hjb(spec, policy, grid);
                std::ostringstream csv;
                sol.to_csv(csv);
                write_file(ctx.out_dir, file, csv.str());
                ctx.outputs.push_back(file);
                double center = sol.value_at(spec.t0, spec.x0[0]);
                ctx.extra[kind] = {{"value_at_start", center},
                                   {"x_min", grid.x_min},
                                   {"x_max", grid.x_max},
                                   {"nx", grid.nx},
                                   {"nt", grid.nt},
                                   {"substeps", sol.substeps}};
                std::cout << kind << "(t0, x0) = " << fmt(center) << "\n";
                ctx.task_ok(kind);
            } catch (const std::exception& e) {
                ctx.task_error(kind, e.what());
            }
        }
        return ctx.any_task_failed ? 2 : 0;
    });
}

}  // namespace isdiff::cli
