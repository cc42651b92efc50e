#include "isdiff/model.hpp"

#include <cmath>

#include "isdiff/errors.hpp"

namespace isdiff {

Mat diffusion_matrix(const DiffusionModel& model, const Vec& x) {
    Mat sigma = model.diffusion(x);
    if (sigma.n != model.dim || !all_finite(sigma))
        throw EvalError("diffusion map returned a bad matrix at x = " + format_point(x));
    Mat a = mat_aat(sigma);
    if (!cholesky(a))
        throw EvalError("diffusion matrix not positive definite at x = " + format_point(x));
    return a;
}

ControlPolicy control_from_subsolution(const DiffusionModel& model, const Subsolution& sub) {
    ControlPolicy c;
    c.u = [diff = model.diffusion, grad = sub.gradient_x](double t, const Vec& x) {
        Mat sigma = diff(x);
        Vec g = grad(t, x);
        Vec u = matvec_t(sigma, g);
        for (double& v : u) v = -v;
        return u;
    };
    return c;
}

SubsolutionReport check_subsolution(const ProblemSpec& spec, const Subsolution& sub,
                                    const SubsolutionCheckOptions& opts) {
    const int d = spec.model.dim;
    if (static_cast<int>(opts.box_lo.size()) != d || static_cast<int>(opts.box_hi.size()) != d)
        throw ArgumentError("subsolution check box dimension mismatch");
    for (int i = 0; i < d; ++i)
        if (!(opts.box_lo[i] < opts.box_hi[i]))
            throw ArgumentError("subsolution check box must satisfy box_lo < box_hi");
    if (opts.t_points < 2 || opts.x_points < 2)
        throw ArgumentError("subsolution check needs at least 2 points per axis");

    // spatial lattice, row-major over dimensions, capped
    long total = 1;
    for (int i = 0; i < d; ++i) {
        total *= opts.x_points;
        if (total > opts.max_points)
            throw ArgumentError("subsolution check lattice exceeds max_points");
    }

    auto lattice_point = [&](long idx) {
        Vec x(d);
        for (int i = 0; i < d; ++i) {
            int j = static_cast<int>(idx % opts.x_points);
            idx /= opts.x_points;
            x[i] = opts.box_lo[i] +
                   (opts.box_hi[i] - opts.box_lo[i]) * j / (opts.x_points - 1);
        }
        return x;
    };

    SubsolutionReport rep;
    rep.min_interior_residual = std::numeric_limits<double>::infinity();
    rep.max_terminal_excess = -std::numeric_limits<double>::infinity();

    bool ok = true;
    for (long ix = 0; ix < total; ++ix) {
        Vec x = lattice_point(ix);
        bool interior = !spec.cost.stopped() || spec.cost.classify(x) == Region::Inside;
        for (int it = 0; interior && it < opts.t_points; ++it) {
            double t = spec.t0 + spec.horizon() * it / (opts.t_points - 1);
            double ut = sub.time_derivative(t, x);
            Vec g = sub.gradient_x(t, x);
            Vec b = spec.model.drift(x);
            Mat sigma = spec.model.diffusion(x);
            if (!std::isfinite(ut) || !all_finite(g) || !all_finite(b) || !all_finite(sigma))
                throw EvalError("subsolution check hit a non-finite evaluation at x = " +
                                format_point(x));
            Vec sg = matvec_t(sigma, g);
            double residual = ut + dot(b, g) - 0.5 * dot(sg, sg);
            double scale = std::max(1.0, std::abs(ut) + std::abs(dot(b, g)) + dot(sg, sg));
            rep.min_interior_residual = std::min(rep.min_interior_residual, residual);
            ++rep.interior_samples;
            if (residual < -opts.tolerance * scale) ok = false;
        }
        // boundary comparison: U(T,x) <= h(x) for smooth costs; for indicator
        // costs U(t,x) <= 0 on the target set at every time
        if (spec.cost.stopped()) {
            if (spec.cost.classify(x) == Region::ExitTarget) {
                for (int it = 0; it < opts.t_points; ++it) {
                    double t = spec.t0 + spec.horizon() * it / (opts.t_points - 1);
                    double u = sub.value(t, x);
                    double excess = u;
                    double scale = std::max(1.0, std::abs(u));
                    rep.max_terminal_excess = std::max(rep.max_terminal_excess, excess);
                    ++rep.terminal_samples;
                    if (excess > opts.tolerance * scale) ok = false;
                }
            }
        } else {
            double uT = sub.value(spec.T, x);
            double data = spec.cost.h(x);
            double excess = uT - data;
            double scale = std::max(1.0, std::abs(uT) + std::abs(data));
            rep.max_terminal_excess = std::max(rep.max_terminal_excess, excess);
            ++rep.terminal_samples;
            if (excess > opts.tolerance * scale) ok = false;
        }
    }
    if (rep.terminal_samples == 0)
        rep.max_terminal_excess = 0.0;
    rep.pass = ok;
    return rep;
}

}  // namespace isdiff
