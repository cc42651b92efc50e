#include "isdiff/expansion.hpp"

#include <cmath>

#include "isdiff/errors.hpp"

namespace isdiff {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

Vec char_velocity(const ProblemSpec& spec, const ControlPolicy& control,
                  const GradientProvider& grad_v0, double s, const Vec& x) {
    Vec b = spec.model.drift(x);
    Mat sigma = spec.model.diffusion(x);
    Vec u = control.u(s, x);
    Mat a = mat_aat(sigma);
    Vec g = grad_v0(s, x);
    if (!all_finite(b) || !all_finite(sigma) || !all_finite(u) || !all_finite(g))
        throw EvalError("characteristic: non-finite field at x = " + format_point(x));
    Vec su = matvec(sigma, u);
    Vec ag = matvec(a, g);
    Vec out(spec.model.dim);
    for (int i = 0; i < spec.model.dim; ++i) out[i] = b[i] - su[i] - ag[i];
    return out;
}

}  // namespace

CharacteristicPath integrate_characteristic(const ProblemSpec& spec,
                                            const ControlPolicy& control,
                                            const GradientProvider& grad_v0, int steps,
                                            const Vec& box_lo, const Vec& box_hi) {
    if (steps < 1) throw ArgumentError("integrate_characteristic: steps must be positive");
    const int d = spec.model.dim;
    const bool boxed = !box_lo.empty() || !box_hi.empty();
    if (boxed && (static_cast<int>(box_lo.size()) != d || static_cast<int>(box_hi.size()) != d))
        throw ArgumentError("integrate_characteristic: box dimension mismatch");

    CharacteristicPath path;
    path.times.reserve(steps + 1);
    path.states.reserve(steps + 1);
    double h = spec.horizon() / steps;
    Vec x = spec.x0;
    path.times.push_back(spec.t0);
    path.states.push_back(x);

    for (int k = 0; k < steps; ++k) {
        double s = spec.t0 + k * h;
        try {
            Vec k1 = char_velocity(spec, control, grad_v0, s, x);
            Vec x2 = x;
            axpy(0.5 * h, k1, x2);
            Vec k2 = char_velocity(spec, control, grad_v0, s + 0.5 * h, x2);
            Vec x3 = x;
            axpy(0.5 * h, k2, x3);
            Vec k3 = char_velocity(spec, control, grad_v0, s + 0.5 * h, x3);
            Vec x4 = x;
            axpy(h, k3, x4);
            Vec k4 = char_velocity(spec, control, grad_v0, s + h, x4);
            for (int i = 0; i < d; ++i)
                x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        } catch (const std::exception& e) {
            throw CharacteristicError(
                "characteristic integration failed at s = " + std::to_string(s) + ": " +
                    e.what(),
                std::move(path));
        }
        if (!all_finite(x))
            throw CharacteristicError(
                "characteristic blow-up at s = " + std::to_string(s + h), std::move(path));
        path.times.push_back(k + 1 == steps ? spec.T : s + h);
        path.states.push_back(x);
        if (boxed && !path.crossed_warning)
            for (int i = 0; i < d; ++i)
                if (x[i] < box_lo[i] || x[i] > box_hi[i]) path.crossed_warning = true;
    }
    return path;
}

V1Quadrature compute_v1(const ProblemSpec& spec, const HessianProvider& hess_v0,
                        const CharacteristicPath& path) {
    if (path.states.size() < 2)
        throw ArgumentError("compute_v1: path needs at least two nodes");
    const int d = spec.model.dim;
    V1Quadrature q;
    q.integrand.resize(path.states.size());
    q.partial.resize(path.states.size());
    for (size_t i = 0; i < path.states.size(); ++i) {
        const Vec& x = path.states[i];
        double s = path.times[i];
        Mat a = diffusion_matrix(spec.model, x);
        Mat hess;
        try {
            hess = hess_v0(s, x);
        } catch (const std::exception& e) {
            throw SolveError("compute_v1: Hessian failed at node " + std::to_string(i) +
                             " (s = " + std::to_string(s) + "): " + e.what());
        }
        double trace = 0.0;
        for (int r = 0; r < d; ++r)
            for (int c = 0; c < d; ++c) trace += a(r, c) * hess(r, c);
        q.integrand[i] = 0.5 * trace;
        if (!std::isfinite(q.integrand[i]))
            throw SolveError("compute_v1: non-finite integrand at node " + std::to_string(i));
    }
    q.partial[0] = 0.0;
    for (size_t i = 1; i < path.states.size(); ++i) {
        double dt = path.times[i] - path.times[i - 1];
        q.partial[i] =
            q.partial[i - 1] + 0.5 * dt * (q.integrand[i - 1] + q.integrand[i]);
    }
    q.value = q.partial.back();
    return q;
}

std::vector<EpsPrediction> predict_second_moment(double v0, double v1,
                                                 const std::vector<double>& eps_list) {
    if (eps_list.empty()) throw ArgumentError("predict_second_moment: empty eps list");
    std::vector<EpsPrediction> out;
    out.reserve(eps_list.size());
    for (double e : eps_list) {
        if (!(e > 0.0)) throw ArgumentError("predict_second_moment: eps must be positive");
        EpsPrediction p;
        p.eps = e;
        p.log_q = -v0 / e - v1;
        p.q = std::exp(p.log_q);
        out.push_back(p);
    }
    return out;
}

ExpansionReport expansion_report(const ProblemSpec& spec, const ControlPolicy& control,
                                 const ExpansionOptions& opts,
                                 const std::string& control_label,
                                 const std::string& problem_label) {
    if (opts.eps_list.empty()) throw ArgumentError("expansion_report: empty eps list");
    for (double e : opts.eps_list)
        if (!(e > 0.0)) throw ArgumentError("expansion_report: eps must be positive");

    ExpansionReport rep;
    rep.v0 = kNaN;
    rep.v1 = kNaN;

    const bool smooth = !spec.cost.stopped();
    if (smooth) {
        V0Field field(spec, control, opts.action);
        rep.v0 = field.value(spec.t0, spec.x0);
        auto grad = [&field](double s, const Vec& x) { return field.gradient(s, x); };
        CharacteristicPath path =
            integrate_characteristic(spec, control, grad, opts.steps, opts.box_lo, opts.box_hi);
        rep.characteristic_warning = path.crossed_warning;
        auto hess = [&field](double s, const Vec& x) { return field.hessian(s, x); };
        rep.v1 = compute_v1(spec, hess, path).value;
        rep.expansion_available = true;
        rep.v1_negative_flag = rep.v0 > 0.0 && rep.v1 < 0.0;
    }

    const bool pde_ok = opts.with_pde && smooth && spec.model.dim == 1;

    // running least-squares fit of log |residual| against log eps
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    int nfit = 0;

    for (size_t r = 0; r < opts.eps_list.size(); ++r) {
        ExpansionRow row;
        row.eps = opts.eps_list[r];
        row.expansion = rep.expansion_available ? rep.v0 + row.eps * rep.v1 : kNaN;
        row.residual = kNaN;
        row.order_estimate = kNaN;

        ProblemSpec s_eps = spec;
        s_eps.epsilon = row.eps;

        if (opts.with_mc) {
            try {
                EstimatorBatch b = run_estimator(s_eps, control, opts.sim, control_label,
                                                 problem_label, kStreamSweepBase + 2 * r);
                row.have_mc = true;
                row.mc_rate = b.minus_eps_log_q();
                row.mc_se = b.se_minus_eps_log_q();
            } catch (const std::exception& e) {
                row.note += std::string("mc: ") + e.what() + "; ";
            }
        }

        if (pde_ok) {
            try {
                Grid1D grid = opts.pde_auto_grid ? default_grid(s_eps, control) : opts.pde_grid;
                PdeSolution1D psi = solve_psi(s_eps, control, grid);
                row.have_pde = true;
                row.pde_psi = psi.value_at(spec.t0, spec.x0[0]);
            } catch (const std::exception& e) {
                row.note += std::string("pde: ") + e.what() + "; ";
            }
        }

        if (row.have_pde && rep.expansion_available) {
            row.residual = row.pde_psi - row.expansion;
            double ar = std::abs(row.residual);
            if (ar > 0.0) {
                ++nfit;
                double lx = std::log(row.eps), ly = std::log(ar);
                sx += lx;
                sy += ly;
                sxx += lx * lx;
                sxy += lx * ly;
                if (nfit >= 2) {
                    double denom = nfit * sxx - sx * sx;
                    if (std::abs(denom) > 1e-30)
                        row.order_estimate = (nfit * sxy - sx * sy) / denom;
                }
            }
        }
        rep.rows.push_back(std::move(row));
    }
    return rep;
}

}  // namespace isdiff
