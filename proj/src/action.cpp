#include "isdiff/action.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <functional>

#include "isdiff/errors.hpp"
#include "isdiff/rng.hpp"

namespace isdiff {

namespace {

constexpr double kArmijo = 1e-4;

// Discretized running-cost problem: interior nodes free, start pinned.
// w_u = 1, w_h = 2 for v0; w_u = 0, w_h = 1 for G (control ignored).
struct PathProblem {
    const ProblemSpec* spec = nullptr;
    const ControlPolicy* control = nullptr;
    double w_u = 0.0, w_h = 1.0;
    int M = 0, d = 0;
    double t0 = 0.0, delta = 0.0;
    Vec x_start;
};

struct SegmentWork {
    Vec m, mp, mm, b, u, up, um, f, fp, fm, v, r, q, du;
    Mat sigma, a, ap, am;
};

// f = b - sigma u (or b when no control); evaluates everything at one point
void eval_point(const PathProblem& pp, double s, const Vec& x, Vec& b, Mat& sigma, Vec& u,
                Vec& f) {
    b = pp.spec->model.drift(x);
    sigma = pp.spec->model.diffusion(x);
    if (!all_finite(b) || !all_finite(sigma))
        throw EvalError("action: model coefficients non-finite at x = " + format_point(x));
    f = b;
    if (pp.control) {
        u = pp.control->u(s, x);
        if (!all_finite(u))
            throw EvalError("action: control non-finite at x = " + format_point(x));
        Vec su = matvec(sigma, u);
        for (int i = 0; i < pp.d; ++i) f[i] -= su[i];
    }
}

// Objective and (optionally) analytic node gradient with finite-differenced
// coefficient Jacobians.  z holds interior nodes phi_1..phi_M.
double eval_objective(const PathProblem& pp, const std::vector<double>& z,
                      std::vector<double>* grad, SegmentWork& w) {
    const int d = pp.d, M = pp.M;
    const double dl = pp.delta;
    if (grad) std::fill(grad->begin(), grad->end(), 0.0);

    auto node = [&](int k) -> const double* {
        return k == 0 ? pp.x_start.data() : z.data() + static_cast<size_t>(k - 1) * d;
    };

    double J = 0.0;
    for (int k = 0; k < M; ++k) {
        const double* pk = node(k);
        const double* pk1 = node(k + 1);
        double s_mid = pp.t0 + (k + 0.5) * dl;
        w.m.assign(pk, pk + d);
        for (int i = 0; i < d; ++i) w.m[i] = 0.5 * (pk[i] + pk1[i]);

        eval_point(pp, s_mid, w.m, w.b, w.sigma, w.u, w.f);
        w.a = mat_aat(w.sigma);
        auto chol = cholesky(w.a);
        if (!chol)
            throw EvalError("action: diffusion matrix not positive definite at x = " +
                            format_point(w.m));
        w.v.resize(d);
        w.r.resize(d);
        for (int i = 0; i < d; ++i) {
            w.v[i] = (pk1[i] - pk[i]) / dl;
            w.r[i] = w.v[i] - w.f[i];
        }
        w.q = chol_solve(*chol, w.r);
        double usq = pp.control ? dot(w.u, w.u) : 0.0;
        J += dl * (0.5 * dot(w.r, w.q) - pp.w_u * usq);

        if (grad) {
            double eta = 1e-6 * std::max(1.0, norm_inf(w.m));
            for (int i = 0; i < d; ++i) {
                w.mp = w.m;
                w.mm = w.m;
                w.mp[i] += eta;
                w.mm[i] -= eta;
                eval_point(pp, s_mid, w.mp, w.b, w.ap, w.up, w.fp);
                Mat sp = w.ap;  // sigma at m+
                eval_point(pp, s_mid, w.mm, w.b, w.am, w.um, w.fm);
                Mat sm = w.am;
                Mat Ap = mat_aat(sp), Am = mat_aat(sm);
                // D_i = -q . df_i - (1/2) q^T dA_i q - w_u d|u|^2_i
                double Di = 0.0;
                for (int j = 0; j < d; ++j)
                    Di -= w.q[j] * (w.fp[j] - w.fm[j]) / (2.0 * eta);
                double qAq = 0.0;
                for (int r2 = 0; r2 < d; ++r2)
                    for (int c2 = 0; c2 < d; ++c2)
                        qAq += w.q[r2] * (Ap(r2, c2) - Am(r2, c2)) * w.q[c2];
                Di -= 0.5 * qAq / (2.0 * eta);
                if (pp.control && pp.w_u != 0.0)
                    Di -= pp.w_u * (dot(w.up, w.up) - dot(w.um, w.um)) / (2.0 * eta);

                double half = 0.5 * dl * Di;
                if (k >= 1) (*grad)[(k - 1) * d + i] += -w.q[i] + half;
                (*grad)[k * d + i] += w.q[i] + half;
            }
        }
    }

    // terminal cost
    const double* pM = node(M);
    Vec xT(pM, pM + d);
    double hT = pp.spec->cost.h(xT);
    if (!std::isfinite(hT))
        throw EvalError("action: terminal cost non-finite at x = " + format_point(xT));
    J += pp.w_h * hT;
    if (grad) {
        double eta = 1e-6 * std::max(1.0, norm_inf(xT));
        for (int i = 0; i < d; ++i) {
            Vec xp = xT, xm = xT;
            xp[i] += eta;
            xm[i] -= eta;
            (*grad)[(M - 1) * d + i] +=
                pp.w_h * (pp.spec->cost.h(xp) - pp.spec->cost.h(xm)) / (2.0 * eta);
        }
    }
    return J;
}

struct MinimizeOutcome {
    std::vector<double> z;
    double f = 0.0;
    double gnorm = 0.0;
    int iters = 0;
    bool converged = false;
    bool unbounded = false;
};

// H0 = K^{-1}, the inverse of the kinetic-term Hessian (1/dl) tridiag(-1,2,-1)
// (last diagonal 1: free endpoint, plus any terminal-cost curvature), applied
// coordinate-wise by a Thomas solve.  The kinetic term dominates the spectrum,
// so this flattens the conditioning from O(M^2) to O(1); the terminal diagonal
// keeps stiff penalties (curvature >> 1/dl) from stalling the line search.
void apply_kinetic_inverse(const PathProblem& pp, std::vector<double>& v,
                           std::vector<double>& cw, std::vector<double>& dw,
                           const std::vector<double>& term_diag) {
    const int M = pp.M, d = pp.d;
    const double off = -1.0 / pp.delta;
    cw.resize(M);
    dw.resize(M);
    for (int i = 0; i < d; ++i) {
        for (int k = 0; k < M; ++k) {
            double diag = (k == M - 1 ? 1.0 / pp.delta + term_diag[i] : 2.0 / pp.delta);
            double m = (k == 0) ? diag : diag - off * cw[k - 1];
            cw[k] = off / m;
            double rhs = v[static_cast<size_t>(k) * d + i] - (k == 0 ? 0.0 : off * dw[k - 1]);
            dw[k] = rhs / m;
        }
        for (int k = M - 1; k >= 0; --k) {
            double x = dw[k];
            if (k < M - 1) x -= cw[k] * v[static_cast<size_t>(k + 1) * d + i];
            v[static_cast<size_t>(k) * d + i] = x;
        }
    }
}

// nonnegative terminal-cost curvature estimate at the current endpoint
void terminal_curvature(const PathProblem& pp, const std::vector<double>& z,
                        std::vector<double>& term_diag) {
    const int d = pp.d;
    const double* pM = z.data() + static_cast<size_t>(pp.M - 1) * d;
    Vec xT(pM, pM + d), xp = xT, xm = xT;
    try {
        double h0 = pp.spec->cost.h(xT);
        for (int i = 0; i < d; ++i) {
            double e = 1e-4 * std::max(1.0, std::fabs(xT[i]));
            xp = xT;
            xm = xT;
            xp[i] += e;
            xm[i] -= e;
            double dd = pp.w_h * (pp.spec->cost.h(xp) - 2.0 * h0 + pp.spec->cost.h(xm)) / (e * e);
            if (std::isfinite(dd)) term_diag[i] = std::max(0.0, dd);
        }
    } catch (const std::exception&) {
        // keep the previous estimate; the preconditioner only needs a scale
    }
}

MinimizeOutcome lbfgs(const PathProblem& pp, std::vector<double> z, const SolverOptions& opts) {
    SegmentWork w;
    const size_t n = z.size();
    std::vector<double> g(n), gnew(n), dir(n), ztrial(n), cw, dw, ky;
    std::deque<std::pair<std::vector<double>, std::vector<double>>> mem;  // (s, y)

    MinimizeOutcome out;
    double f = eval_objective(pp, z, &g, w);
    std::vector<double> term_diag(pp.d, 0.0);

    for (int it = 0; it < opts.max_iterations; ++it) {
        terminal_curvature(pp, z, term_diag);
        out.iters = it;
        if (f < opts.unbounded_threshold) {
            out.unbounded = true;
            break;
        }
        double gnorm = norm2(g);
        if (gnorm <= opts.gradient_tolerance) {
            out.converged = true;
            break;
        }

        // two-loop recursion
        dir = g;
        std::vector<double> alpha(mem.size());
        for (int i = static_cast<int>(mem.size()) - 1; i >= 0; --i) {
            const auto& [s, y] = mem[i];
            double rho = 1.0 / dot(y, s);
            alpha[i] = rho * dot(s, dir);
            axpy(-alpha[i], y, dir);
        }
        apply_kinetic_inverse(pp, dir, cw, dw, term_diag);
        if (!mem.empty()) {
            const auto& [s, y] = mem.back();
            ky = y;
            apply_kinetic_inverse(pp, ky, cw, dw, term_diag);
            double gamma = dot(s, y) / dot(y, ky);
            if (std::isfinite(gamma) && gamma > 0.0)
                for (double& v : dir) v *= gamma;
        }
        for (size_t i = 0; i < mem.size(); ++i) {
            const auto& [s, y] = mem[i];
            double rho = 1.0 / dot(y, s);
            double beta = rho * dot(y, dir);
            axpy(alpha[i] - beta, s, dir);
        }
        for (double& v : dir) v = -v;

        double slope = dot(g, dir);
        if (!(slope < 0.0)) {  // not a descent direction; reset to -K^{-1} g
            mem.clear();
            for (size_t i = 0; i < n; ++i) dir[i] = -g[i];
            apply_kinetic_inverse(pp, dir, cw, dw, term_diag);
            slope = dot(g, dir);
        }

        // backtracking Armijo
        double step = 1.0;
        double fnew = 0.0;
        bool accepted = false;
        for (int ls = 0; ls < 50; ++ls) {
            for (size_t i = 0; i < n; ++i) ztrial[i] = z[i] + step * dir[i];
            fnew = eval_objective(pp, ztrial, &gnew, w);
            if (std::isfinite(fnew) && fnew <= f + kArmijo * step * slope) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) {
            if (!mem.empty()) {  // drop the memory and retry from steepest descent
                mem.clear();
                continue;
            }
            break;  // stuck
        }

        std::vector<double> s(n), y(n);
        for (size_t i = 0; i < n; ++i) {
            s[i] = step * dir[i];
            y[i] = gnew[i] - g[i];
        }
        if (dot(s, y) > 1e-12 * norm2(s) * norm2(y)) {
            mem.emplace_back(std::move(s), std::move(y));
            if (static_cast<int>(mem.size()) > opts.lbfgs_memory) mem.pop_front();
        }
        z.swap(ztrial);
        g.swap(gnew);
        f = fnew;
    }
    out.z = std::move(z);
    out.f = f;
    SegmentWork w2;
    std::vector<double> gfin(n);
    eval_objective(pp, out.z, &gfin, w2);
    out.gnorm = norm2(gfin);
    if (out.gnorm <= opts.gradient_tolerance) out.converged = true;
    return out;
}

std::vector<double> straight_line(const PathProblem& pp, const Vec& y) {
    std::vector<double> z(static_cast<size_t>(pp.M) * pp.d);
    for (int k = 1; k <= pp.M; ++k)
        for (int i = 0; i < pp.d; ++i)
            z[(k - 1) * pp.d + i] =
                pp.x_start[i] + (y[i] - pp.x_start[i]) * k / static_cast<double>(pp.M);
    return z;
}

std::vector<double> flow_path(const PathProblem& pp) {
    std::vector<double> z(static_cast<size_t>(pp.M) * pp.d);
    Vec x = pp.x_start, b, u, f;
    Mat sigma;
    for (int k = 1; k <= pp.M; ++k) {
        double s = pp.t0 + (k - 0.5) * pp.delta;
        eval_point(pp, s, x, b, sigma, u, f);
        for (int i = 0; i < pp.d; ++i) {
            double xi = x[i] + f[i] * pp.delta;
            if (!std::isfinite(xi)) xi = x[i];  // runaway flow: freeze
            x[i] = xi;
        }
        std::copy(x.begin(), x.end(), z.begin() + static_cast<size_t>(k - 1) * pp.d);
    }
    return z;
}

VariationalResult solve_path_problem(const PathProblem& pp, const SolverOptions& opts,
                                     bool full_restarts) {
    VariationalResult res;
    if (pp.M == 0) {  // empty horizon
        Vec xT = pp.x_start;
        res.value = pp.w_h * pp.spec->cost.h(xT);
        res.converged = true;
        res.optimizer.times = {pp.t0};
        res.optimizer.states = {xT};
        return res;
    }

    SegmentWork w;
    // probe straight lines along each coordinate axis for the best terminal
    double R = (full_restarts ? 10.0 : 8.0) * std::max(1.0, norm2(pp.x_start));
    int npts = full_restarts ? 81 : 21;
    Vec best_y = pp.x_start;
    double best_probe = std::numeric_limits<double>::infinity();
    for (int dim = 0; dim < pp.d; ++dim) {
        for (int j = 0; j < npts; ++j) {
            Vec y = pp.x_start;
            y[dim] += -R + 2.0 * R * j / (npts - 1);
            double val = eval_objective(pp, straight_line(pp, y), nullptr, w);
            if (val < best_probe) {
                best_probe = val;
                best_y = y;
            }
        }
    }

    std::vector<std::vector<double>> starts;
    starts.push_back(straight_line(pp, best_y));
    starts.push_back(flow_path(pp));
    if (full_restarts) {
        // smooth deterministic perturbations of the probed start
        for (int r = 0; r < opts.restarts - 1; ++r) {
            NormalStream noise(opts.perturb_seed, static_cast<uint64_t>(r), 0);
            std::vector<double> z = starts[0];
            double amp = opts.perturb_scale * std::max(1.0, norm2(pp.x_start));
            for (int i = 0; i < pp.d; ++i) {
                double eta = noise.next();
                for (int k = 1; k <= pp.M; ++k)
                    z[(k - 1) * pp.d + i] += amp * eta * std::sin(M_PI * k / pp.M);
            }
            starts.push_back(std::move(z));
        }
    }

    MinimizeOutcome best;
    bool have = false;
    int used = 0;
    for (auto& z0 : starts) {
        MinimizeOutcome o = lbfgs(pp, std::move(z0), opts);
        ++used;
        if (o.unbounded) {
            res.value = o.f;
            res.unbounded = true;
            res.restarts_used = used - 1;
            return res;
        }
        bool better = !have || o.f < best.f - 1e-12 * std::max(1.0, std::abs(best.f)) ||
                      (std::abs(o.f - best.f) <= 1e-10 * std::max(1.0, std::abs(best.f)) &&
                       o.converged && !best.converged);
        if (better) {
            best = std::move(o);
            have = true;
        }
    }

    res.value = best.f;
    res.converged = best.converged;
    res.gradient_norm = best.gnorm;
    res.iterations = best.iters;
    res.restarts_used = used - 1;
    res.optimizer.times.resize(pp.M + 1);
    res.optimizer.states.resize(pp.M + 1);
    for (int k = 0; k <= pp.M; ++k) {
        res.optimizer.times[k] = pp.t0 + k * pp.delta;
        if (k == 0)
            res.optimizer.states[k] = pp.x_start;
        else
            res.optimizer.states[k] =
                Vec(best.z.begin() + static_cast<size_t>(k - 1) * pp.d,
                    best.z.begin() + static_cast<size_t>(k) * pp.d);
    }
    return res;
}

void validate_options(const SolverOptions& o) {
    if (o.nodes < 2) throw ArgumentError("action: nodes must be at least 2");
    if (o.max_iterations < 1) throw ArgumentError("action: max_iterations must be positive");
    if (!(o.gradient_tolerance > 0.0))
        throw ArgumentError("action: gradient_tolerance must be positive");
    if (o.restarts < 1) throw ArgumentError("action: restarts must be positive");
    if (o.lbfgs_memory < 1) throw ArgumentError("action: lbfgs_memory must be positive");
}

PathProblem make_problem(const ProblemSpec& spec, const ControlPolicy* control, double w_u,
                         double w_h, int nodes, double t0, const Vec& x_start) {
    if (spec.cost.stopped())
        throw ArgumentError("action solvers cover smooth terminal costs only");
    if (nodes < 0) throw ArgumentError("action: nodes must be nonnegative");
    PathProblem pp;
    pp.spec = &spec;
    pp.control = control;
    pp.w_u = w_u;
    pp.w_h = w_h;
    pp.d = spec.model.dim;
    pp.t0 = t0;
    pp.x_start = x_start;
    double tau = spec.T - t0;
    if (tau < 0.0) throw ArgumentError("action: start time beyond the horizon");
    pp.M = tau > 1e-14 ? nodes : 0;
    pp.delta = pp.M ? tau / pp.M : 0.0;
    if (pp.M > 0 && nodes < 2) throw ArgumentError("action: need at least 2 nodes");
    return pp;
}

}  // namespace

VariationalResult solve_G(const ProblemSpec& spec, const SolverOptions& opts) {
    validate_options(opts);
    PathProblem pp = make_problem(spec, nullptr, 0.0, 1.0, opts.nodes, spec.t0, spec.x0);
    return solve_path_problem(pp, opts, true);
}

VariationalResult solve_v0(const ProblemSpec& spec, const ControlPolicy& control,
                           const SolverOptions& opts) {
    validate_options(opts);
    PathProblem pp = make_problem(spec, &control, 1.0, 2.0, opts.nodes, spec.t0, spec.x0);
    return solve_path_problem(pp, opts, true);
}

namespace {

double v0_value_checked(const ProblemSpec& spec, const ControlPolicy& control, const Vec& x,
                        const SolverOptions& opts) {
    ProblemSpec s = spec;
    s.x0 = x;
    VariationalResult r = solve_v0(s, control, opts);
    if (r.unbounded)
        throw SolveError("v0 stencil: objective unbounded below at x = " + format_point(x));
    if (!r.converged &&
        r.gradient_norm > 1e-5 * std::max(1.0, std::abs(r.value)))
        throw SolveError("v0 stencil solve failed to converge at x = " + format_point(x));
    return r.value;
}

}  // namespace

Vec v0_gradient(const ProblemSpec& spec, const ControlPolicy& control, const Vec& x,
                const SolverOptions& opts) {
    const int d = spec.model.dim;
    double eta = opts.fd_gradient_step * std::max(1.0, norm2(x));
    Vec g(d);
    for (int i = 0; i < d; ++i) {
        Vec xp = x, xm = x;
        xp[i] += eta;
        xm[i] -= eta;
        g[i] = (v0_value_checked(spec, control, xp, opts) -
                v0_value_checked(spec, control, xm, opts)) /
               (2.0 * eta);
    }
    return g;
}

Mat v0_hessian(const ProblemSpec& spec, const ControlPolicy& control, const Vec& x,
               const SolverOptions& opts) {
    const int d = spec.model.dim;
    double eta = opts.fd_hessian_step * std::max(1.0, norm2(x));
    Mat h(d);
    double v0c = v0_value_checked(spec, control, x, opts);
    for (int i = 0; i < d; ++i) {
        Vec xp = x, xm = x;
        xp[i] += eta;
        xm[i] -= eta;
        h(i, i) = (v0_value_checked(spec, control, xp, opts) - 2.0 * v0c +
                   v0_value_checked(spec, control, xm, opts)) /
                  (eta * eta);
        for (int j = i + 1; j < d; ++j) {
            Vec xpp = x, xpm = x, xmp = x, xmm = x;
            xpp[i] += eta;
            xpp[j] += eta;
            xpm[i] += eta;
            xpm[j] -= eta;
            xmp[i] -= eta;
            xmp[j] += eta;
            xmm[i] -= eta;
            xmm[j] -= eta;
            double hij = (v0_value_checked(spec, control, xpp, opts) -
                          v0_value_checked(spec, control, xpm, opts) -
                          v0_value_checked(spec, control, xmp, opts) +
                          v0_value_checked(spec, control, xmm, opts)) /
                         (4.0 * eta * eta);
            h(i, j) = hij;
            h(j, i) = hij;
        }
    }
    symmetrize(h);
    return h;
}

V0Field::V0Field(const ProblemSpec& spec, const ControlPolicy& control,
                 const SolverOptions& opts)
    : spec_(spec), control_(control), opts_(opts) {
    validate_options(opts);
    if (spec.cost.stopped())
        throw ArgumentError("action solvers cover smooth terminal costs only");
}

double V0Field::solve_at(double s, const Vec& x, bool full_restarts) {
    double tau_full = spec_.horizon();
    double tau = spec_.T - s;
    if (tau <= 1e-14 * std::max(1.0, std::abs(spec_.T)))
        return 2.0 * spec_.cost.h(x);
    int nodes = std::max(8, static_cast<int>(std::ceil(opts_.nodes * tau / tau_full)));
    PathProblem pp = make_problem(spec_, &control_, 1.0, 2.0, nodes, s, x);
    VariationalResult r = solve_path_problem(pp, opts_, full_restarts);
    if (r.unbounded)
        throw SolveError("v0 field: objective unbounded below at (s, x) = (" +
                         std::to_string(s) + ", " + format_point(x) + ")");
    if (!r.converged && r.gradient_norm > 1e-5 * std::max(1.0, std::abs(r.value)))
        throw SolveError("v0 field solve failed to converge at (s, x) = (" +
                         std::to_string(s) + ", " + format_point(x) + ")");
    return r.value;
}

double V0Field::value(double s, const Vec& x) {
    char buf[32];
    std::string key;
    auto push = [&](double v) {
        long long q = static_cast<long long>(std::llround(v * 1e6));
        std::snprintf(buf, sizeof buf, "%lld;", q);
        key += buf;
    };
    push(s);
    for (double xi : x) push(xi);

    {
        std::lock_guard<std::mutex> lk(mutex_);
        auto it = cache_.find(key);
        if (it != cache_.end()) return it->second;
    }
    bool full;
    {
        std::lock_guard<std::mutex> lk(mutex_);
        full = !first_done_;
        first_done_ = true;
    }
    double v = solve_at(s, x, full);
    std::lock_guard<std::mutex> lk(mutex_);
    cache_.emplace(std::move(key), v);
    return v;
}

Vec V0Field::gradient(double s, const Vec& x) {
    const int d = spec_.model.dim;
    double eta = opts_.fd_gradient_step * std::max(1.0, norm2(x));
    Vec g(d);
    for (int i = 0; i < d; ++i) {
        Vec xp = x, xm = x;
        xp[i] += eta;
        xm[i] -= eta;
        g[i] = (value(s, xp) - value(s, xm)) / (2.0 * eta);
    }
    return g;
}

Mat V0Field::hessian(double s, const Vec& x) {
    const int d = spec_.model.dim;
    double eta = opts_.fd_hessian_step * std::max(1.0, norm2(x));
    Mat h(d);
    double vc = value(s, x);
    for (int i = 0; i < d; ++i) {
        Vec xp = x, xm = x;
        xp[i] += eta;
        xm[i] -= eta;
        h(i, i) = (value(s, xp) - 2.0 * vc + value(s, xm)) / (eta * eta);
        for (int j = i + 1; j < d; ++j) {
            Vec xpp = x, xpm = x, xmp = x, xmm = x;
            xpp[i] += eta;
            xpp[j] += eta;
            xpm[i] += eta;
            xpm[j] -= eta;
            xmp[i] -= eta;
            xmp[j] += eta;
            xmm[i] -= eta;
            xmm[j] -= eta;
            double hij = (value(s, xpp) - value(s, xpm) - value(s, xmp) + value(s, xmm)) /
                         (4.0 * eta * eta);
            h(i, j) = hij;
            h(j, i) = hij;
        }
    }
    symmetrize(h);
    return h;
}

}  // namespace isdiff
