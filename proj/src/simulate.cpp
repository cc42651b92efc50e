#include "isdiff/simulate.hpp"

#include <cassert>
#include <cmath>
#include <mutex>
#include <thread>

#include "isdiff/errors.hpp"
#include "isdiff/rng.hpp"

namespace isdiff {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

enum class Mode { Sampling, Reversed };

PathSample step_path(const ProblemSpec& spec, const ControlPolicy& control,
                     const SimulationConfig& cfg, NormalStream& noise, Mode mode) {
    const int d = spec.model.dim;
    const int steps = num_steps(spec, cfg.dt);
    const double eps = spec.epsilon;
    const bool stopped = spec.cost.stopped();

    PathSample out;
    Vec x = spec.x0;
    Vec xi(d);
    double lw = 0.0;

    for (int k = 0; k < steps; ++k) {
        double tk = spec.t0 + k * cfg.dt;
        double tk1 = (k + 1 == steps) ? spec.T : spec.t0 + (k + 1) * cfg.dt;
        double hk = tk1 - tk;

        Vec u = control.u(tk, x);
        if (!all_finite(u))
            throw EvalError("control returned non-finite value at t = " + std::to_string(tk) +
                            ", x = " + format_point(x));
        assert(!(control.bound < kInf) || norm2(u) <= control.bound * (1.0 + 1e-9));
        Vec b = spec.model.drift(x);
        Mat sigma = spec.model.diffusion(x);
        if (!all_finite(b) || !all_finite(sigma))
            throw EvalError("model coefficients non-finite at x = " + format_point(x));

        noise.fill(xi);
        Vec su = matvec(sigma, u);
        Vec sxi = matvec(sigma, xi);
        double usq = dot(u, u);

        if (mode == Mode::Sampling) {
            for (int i = 0; i < d; ++i) x[i] += (b[i] + su[i]) * hk + std::sqrt(eps * hk) * sxi[i];
            lw += -0.5 * usq * hk / eps - std::sqrt(hk / eps) * dot(u, xi);
        } else {
            for (int i = 0; i < d; ++i) x[i] += (b[i] - su[i]) * hk + std::sqrt(eps * hk) * sxi[i];
            lw += usq * hk / eps;
        }
        out.steps = k + 1;

        if (!all_finite(x) || !std::isfinite(lw))
            throw EvalError("path blew up at step " + std::to_string(k + 1) + " of " +
                            std::to_string(steps));

        if (stopped) {
            Region r = spec.cost.classify(x);
            if (r != Region::Inside) {
                out.exit_time = tk1;
                out.exit_class = r;
                break;
            }
        }
    }
    out.terminal_state = std::move(x);
    out.log_weight = lw;
    return out;
}

double log_payoff(const ProblemSpec& spec, const PathSample& path, Mode mode) {
    double eps = spec.epsilon;
    if (spec.cost.stopped()) {
        if (path.exit_class != Region::ExitTarget) return -kInf;
        return path.log_weight;
    }
    double h = spec.cost.h(path.terminal_state);
    if (!std::isfinite(h))
        throw EvalError("terminal cost non-finite at x = " + format_point(path.terminal_state));
    double factor = (mode == Mode::Sampling) ? 1.0 : 2.0;
    return -factor * h / eps + path.log_weight;
}

EstimatorBatch run_mode(const ProblemSpec& spec, const ControlPolicy& control,
                        const SimulationConfig& cfg, const std::string& control_label,
                        const std::string& problem_label, uint64_t stream, Mode mode) {
    validate_config(spec, cfg);
    const uint64_t n = cfg.n_samples;
    std::vector<double> lg(n);

    auto worker = [&](uint64_t begin, uint64_t end) {
        for (uint64_t i = begin; i < end; ++i) {
            NormalStream noise(cfg.seed, stream, i);
            PathSample path = step_path(spec, control, cfg, noise, mode);
            lg[i] = log_payoff(spec, path, mode);
        }
    };

    int nthreads = std::max(1, cfg.threads);
    nthreads = static_cast<int>(std::min<uint64_t>(nthreads, n));
    if (nthreads == 1) {
        worker(0, n);
    } else {
        // first worker exception wins; the rest still run to completion so
        // every thread can be joined before the rethrow
        std::exception_ptr first_error;
        std::mutex error_mutex;
        auto guarded = [&](uint64_t begin, uint64_t end) {
            try {
                worker(begin, end);
            } catch (...) {
                std::lock_guard<std::mutex> lk(error_mutex);
                if (!first_error) first_error = std::current_exception();
            }
        };
        std::vector<std::thread> pool;
        uint64_t chunk = (n + nthreads - 1) / nthreads;
        for (int t = 0; t < nthreads; ++t) {
            uint64_t b = t * chunk;
            uint64_t e = std::min(n, b + chunk);
            if (b < e) pool.emplace_back(guarded, b, e);
        }
        for (auto& th : pool) th.join();
        if (first_error) std::rethrow_exception(first_error);
    }

    BatchProvenance prov{problem_label, control_label, spec.epsilon, cfg.dt, cfg.seed};
    return make_batch(lg, prov);
}

}  // namespace

int num_steps(const ProblemSpec& spec, double dt) {
    double tau = spec.horizon();
    if (tau <= 0.0) return 0;
    return static_cast<int>(std::ceil(tau / dt - 1e-12));
}

void validate_config(const ProblemSpec& spec, const SimulationConfig& cfg) {
    if (!(cfg.dt > 0.0)) throw ArgumentError("dt must be positive");
    if (spec.horizon() < 0.0) throw ArgumentError("T must not precede t0");
    if (spec.horizon() > 0.0 && cfg.dt > spec.horizon() * (1.0 + 1e-12))
        throw ArgumentError("dt exceeds the problem horizon");
    if (cfg.n_samples == 0) throw ArgumentError("n_samples must be positive");
    if (cfg.n_samples > (uint64_t(1) << 32))
        throw ArgumentError("n_samples must fit in 32 bits");
    if (cfg.threads < 1) throw ArgumentError("threads must be positive");
    if (!(spec.epsilon > 0.0)) throw ArgumentError("epsilon must be positive");
    if (spec.cost.stopped() && !cfg.stop_at_exit)
        throw ArgumentError("stopped indicator costs require stop_at_exit");
    if (spec.cost.stopped() && !spec.cost.classify)
        throw ArgumentError("stopped indicator costs need a classify map");
}

PathSample simulate_is_path(const ProblemSpec& spec, const ControlPolicy& control,
                            const SimulationConfig& cfg, NormalStream& noise) {
    return step_path(spec, control, cfg, noise, Mode::Sampling);
}

PathSample simulate_reversed_path(const ProblemSpec& spec, const ControlPolicy& control,
                                  const SimulationConfig& cfg, NormalStream& noise) {
    return step_path(spec, control, cfg, noise, Mode::Reversed);
}

EstimatorBatch run_estimator(const ProblemSpec& spec, const ControlPolicy& control,
                             const SimulationConfig& cfg, const std::string& control_label,
                             const std::string& problem_label, uint64_t stream) {
    return run_mode(spec, control, cfg, control_label, problem_label, stream, Mode::Sampling);
}

EstimatorBatch second_moment_direct(const ProblemSpec& spec, const ControlPolicy& control,
                                    const SimulationConfig& cfg,
                                    const std::string& control_label,
                                    const std::string& problem_label, uint64_t stream) {
    return run_mode(spec, control, cfg, control_label, problem_label, stream, Mode::Reversed);
}

SweepTable epsilon_sweep(const ProblemSpec& spec, const ControlPolicy& control,
                         const SimulationConfig& cfg, const std::vector<double>& eps_list,
                         const std::string& control_label, const std::string& problem_label) {
    if (eps_list.empty()) throw ArgumentError("epsilon_sweep: empty eps list");
    for (double e : eps_list)
        if (!(e > 0.0)) throw ArgumentError("epsilon_sweep: eps values must be positive");
    SweepTable table;
    for (size_t r = 0; r < eps_list.size(); ++r) {
        SweepRow row;
        row.eps = eps_list[r];
        ProblemSpec s = spec;
        s.epsilon = eps_list[r];
        try {
            row.batch = run_estimator(s, control, cfg, control_label, problem_label,
                                      kStreamSweepBase + 2 * r);
            row.ok = true;
        } catch (const std::exception& e) {
            row.error = e.what();
        }
        table.rows.push_back(std::move(row));
    }
    return table;
}

}  // namespace isdiff
