#include "isdiff/pde1d.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "isdiff/errors.hpp"

namespace isdiff {

namespace {

constexpr int kMaxSubsteps = 64;
constexpr double kCfl = 0.9;

struct Coeffs {
    int nx;
    double dx;
    std::vector<double> x;      // nodes
    std::vector<double> b;      // drift
    std::vector<double> a;      // sigma sigma^T (scalar)
    std::vector<double> sigma;  // sigma itself
};

Coeffs make_coeffs(const ProblemSpec& spec, const Grid1D& grid) {
    if (spec.model.dim != 1)
        throw ArgumentError("pde1d supports one-dimensional problems only");
    if (grid.nx < 5) throw ArgumentError("pde1d: nx must be at least 5");
    if (grid.nt < 1) throw ArgumentError("pde1d: nt must be at least 1");
    if (!(grid.x_max > grid.x_min)) throw ArgumentError("pde1d: empty spatial domain");
    if (!(spec.horizon() > 0.0)) throw ArgumentError("pde1d: empty time horizon");
    Coeffs c;
    c.nx = grid.nx;
    c.dx = grid.dx();
    c.x.resize(grid.nx);
    c.b.resize(grid.nx);
    c.a.resize(grid.nx);
    c.sigma.resize(grid.nx);
    for (int j = 0; j < grid.nx; ++j) {
        c.x[j] = grid.x(j);
        Vec xv{c.x[j]};
        Vec bv = spec.model.drift(xv);
        Mat av = diffusion_matrix(spec.model, xv);
        if (!all_finite(bv))
            throw EvalError("pde1d: drift non-finite at x = " + std::to_string(c.x[j]));
        c.b[j] = bv[0];
        c.a[j] = av(0, 0);
        c.sigma[j] = std::sqrt(av(0, 0));
    }
    return c;
}

// control values and f = b - sigma u at one time level
void eval_control(const ProblemSpec& spec, const ControlPolicy& control, const Coeffs& c,
                  double t, std::vector<double>& u, std::vector<double>& f) {
    for (int j = 0; j < c.nx; ++j) {
        Vec uv = control.u(t, Vec{c.x[j]});
        if (!all_finite(uv))
            throw EvalError("pde1d: control non-finite at (t, x) = (" + std::to_string(t) +
                            ", " + std::to_string(c.x[j]) + ")");
        u[j] = uv[0];
        f[j] = c.b[j] - c.sigma[j] * uv[0];
    }
}

// second-order upwind-biased first derivative; the wind pulls values from the
// side the backward characteristic points to (forward stencil for f > 0)
inline double upwind_dx(const std::vector<double>& v, int j, int nx, double dx, double f) {
    if (f > 0.0) {
        if (j + 2 < nx) return (-3.0 * v[j] + 4.0 * v[j + 1] - v[j + 2]) / (2.0 * dx);
        if (j + 1 < nx) return (v[j + 1] - v[j]) / dx;
        return (v[j] - v[j - 1]) / dx;
    }
    if (j - 2 >= 0) return (3.0 * v[j] - 4.0 * v[j - 1] + v[j - 2]) / (2.0 * dx);
    if (j - 1 >= 0) return (v[j] - v[j - 1]) / dx;
    return (v[j + 1] - v[j]) / dx;
}

inline double central_dx(const std::vector<double>& v, int j, int nx, double dx) {
    if (j == 0) return (v[1] - v[0]) / dx;
    if (j == nx - 1) return (v[nx - 1] - v[nx - 2]) / dx;
    return (v[j + 1] - v[j - 1]) / (2.0 * dx);
}

// Thomas algorithm for (I - w D) with D = diag(coef) * second difference and
// identity boundary rows; factorization reused across steps.
struct TridiagCN {
    int nx;
    std::vector<double> lower, diag, upper;

    TridiagCN(const Coeffs& c, double eps, double w) : nx(c.nx) {
        lower.assign(nx, 0.0);
        diag.assign(nx, 1.0);
        upper.assign(nx, 0.0);
        double r = w / (c.dx * c.dx);
        for (int j = 1; j + 1 < nx; ++j) {
            double coef = 0.5 * eps * c.a[j] * r;
            lower[j] = -coef;
            diag[j] = 1.0 + 2.0 * coef;
            upper[j] = -coef;
        }
    }

    void solve(std::vector<double>& rhs, std::vector<double>& out,
               std::vector<double>& scratch) const {
        // forward sweep
        scratch[0] = upper[0] / diag[0];
        out[0] = rhs[0] / diag[0];
        for (int j = 1; j < nx; ++j) {
            double m = diag[j] - lower[j] * scratch[j - 1];
            scratch[j] = upper[j] / m;
            out[j] = (rhs[j] - lower[j] * out[j - 1]) / m;
        }
        for (int j = nx - 2; j >= 0; --j) out[j] -= scratch[j] * out[j + 1];
    }
};

// explicit diffusion application (for the CN right-hand side)
inline double apply_diffusion(const std::vector<double>& v, int j, int nx, double dx,
                              double eps, double a) {
    if (j == 0 || j == nx - 1) return 0.0;  // zero-curvature ghost
    return 0.5 * eps * a * (v[j - 1] - 2.0 * v[j] + v[j + 1]) / (dx * dx);
}

struct StepMonitor {
    double max_speed = 0.0;  // advective speed, for the CFL check
    double max_rate = 0.0;   // zeroth-order rate (phi potential)
    bool finite = true;
};

inline double minmod(double a, double b) {
    if (a > 0.0 && b > 0.0) return std::min(a, b);
    if (a < 0.0 && b < 0.0) return std::max(a, b);
    return 0.0;
}

// local Lax-Friedrichs Hamiltonian with minmod-limited second-order one-sided
// derivatives (Osher-Shu).  Exact on affine and quadratic profiles away from
// the boundary rows, which fall back to first-order one-sided differences.
void lf_hamiltonian(const Coeffs& c, const std::vector<double>& u, const std::vector<double>& f,
                    const std::vector<double>& v, std::vector<double>& out, StepMonitor& mon) {
    const double dx = c.dx;
    const int nx = c.nx;
    for (int j = 0; j < nx; ++j) {
        double pm, pp;
        if (j == 0) {
            pm = pp = (v[1] - v[0]) / dx;
        } else if (j == nx - 1) {
            pm = pp = (v[j] - v[j - 1]) / dx;
        } else {
            double dm = (v[j] - v[j - 1]) / dx;
            double dp = (v[j + 1] - v[j]) / dx;
            double d2 = (dp - dm) / dx;
            double d2m = j >= 2 ? (dm - (v[j - 1] - v[j - 2]) / dx) / dx : d2;
            double d2p = j + 2 < nx ? ((v[j + 2] - v[j + 1]) / dx - dp) / dx : d2;
            pm = dm + 0.5 * dx * minmod(d2m, d2);
            pp = dp - 0.5 * dx * minmod(d2, d2p);
        }
        double pbar = 0.5 * (pm + pp);
        double ham = f[j] * pbar - 0.5 * c.a[j] * pbar * pbar - u[j] * u[j];
        double alpha = std::abs(f[j]) + c.a[j] * std::max(std::abs(pm), std::abs(pp));
        // +alpha/2 (pp - pm) is dissipative for the backward-in-time march
        out[j] = ham + 0.5 * alpha * (pp - pm);
        mon.max_speed = std::max(mon.max_speed, alpha);
        if (!std::isfinite(out[j])) mon.finite = false;
    }
}

// explicit part E for psi: f psi_x - (a/2) (psi_x)^2 - u^2
void explicit_psi(const Coeffs& c, const std::vector<double>& u, const std::vector<double>& f,
                  const std::vector<double>& v, std::vector<double>& out, StepMonitor& mon) {
    for (int j = 0; j < c.nx; ++j) {
        double px_up = upwind_dx(v, j, c.nx, c.dx, f[j]);
        double px_c = central_dx(v, j, c.nx, c.dx);
        out[j] = f[j] * px_up - 0.5 * c.a[j] * px_c * px_c - u[j] * u[j];
        double speed = std::abs(f[j]) + c.a[j] * std::abs(px_c);
        mon.max_speed = std::max(mon.max_speed, speed);
        if (!std::isfinite(out[j])) mon.finite = false;
    }
}

// minmod-limited upwind derivative: second order where the stencil resolves
// the profile, first-order monotone on steep flanks (phi is a near-singular
// exponential there and the unlimited stencil can push it negative)
inline double limited_upwind_dx(const std::vector<double>& v, int j, int nx, double dx,
                                double f) {
    auto d2 = [&](int m) { return (v[m + 1] - 2.0 * v[m] + v[m - 1]) / (dx * dx); };
    if (f > 0.0) {
        if (j + 1 >= nx) return (v[j] - v[j - 1]) / dx;
        double dp = (v[j + 1] - v[j]) / dx;
        if (j + 2 >= nx || j == 0) return dp;
        return dp - 0.5 * dx * minmod(d2(j), d2(j + 1));
    }
    if (j - 1 < 0) return (v[j + 1] - v[j]) / dx;
    double dm = (v[j] - v[j - 1]) / dx;
    if (j - 2 < 0 || j == nx - 1) return dm;
    return dm + 0.5 * dx * minmod(d2(j - 1), d2(j));
}

// explicit part E for phi: f phi_x + (u^2/eps) phi
void explicit_phi(const Coeffs& c, const std::vector<double>& u, const std::vector<double>& f,
                  double eps, const std::vector<double>& v, std::vector<double>& out,
                  StepMonitor& mon) {
    for (int j = 0; j < c.nx; ++j) {
        double px_up = limited_upwind_dx(v, j, c.nx, c.dx, f[j]);
        double rate = u[j] * u[j] / eps;
        out[j] = f[j] * px_up + rate * v[j];
        mon.max_speed = std::max(mon.max_speed, std::abs(f[j]));
        mon.max_rate = std::max(mon.max_rate, rate);
        if (!std::isfinite(out[j])) mon.finite = false;
    }
}

struct CflBreach {};  // internal: restart the march with more substeps

PdeSolution1D march(const ProblemSpec& spec, const ControlPolicy& control, const Grid1D& grid,
                    PdeKind kind, const std::vector<double>& terminal) {
    Coeffs c = make_coeffs(spec, grid);
    const double eps = spec.epsilon;
    const double dt_store = spec.horizon() / grid.nt;

    for (int mult = 1; mult <= kMaxSubsteps; mult *= 2) {
        PdeSolution1D sol;
        sol.grid = grid;
        sol.t0 = spec.t0;
        sol.T = spec.T;
        sol.kind = kind;
        sol.substeps = mult;
        sol.values.assign(static_cast<size_t>(grid.nt + 1) * grid.nx, 0.0);
        std::copy(terminal.begin(), terminal.end(),
                  sol.values.begin() + static_cast<size_t>(grid.nt) * grid.nx);

        const double k = dt_store / mult;
        const bool diffusive = kind != PdeKind::V0;
        TridiagCN pred(c, eps, diffusive ? k : 0.0);
        TridiagCN corr(c, eps, diffusive ? 0.5 * k : 0.0);

        std::vector<double> v(terminal), vstar(c.nx), vnew(c.nx), e0(c.nx), e1(c.nx),
            rhs(c.nx), scratch(c.nx), u0(c.nx), f0(c.nx), u1(c.nx), f1(c.nx);

        try {
            eval_control(spec, control, c, spec.T, u0, f0);
            for (int i = grid.nt - 1; i >= 0; --i) {
                for (int s = 0; s < mult; ++s) {
                    double t_later = sol.t(i + 1) - s * k;
                    double t_earlier = t_later - k;
                    StepMonitor mon;
                    eval_control(spec, control, c, t_earlier, u1, f1);

                    if (kind == PdeKind::V0) {
                        // Heun average of two local LF Euler stages (TVD-RK2)
                        lf_hamiltonian(c, u0, f0, v, e0, mon);
                        for (int j = 0; j < c.nx; ++j) vstar[j] = v[j] + k * e0[j];
                        lf_hamiltonian(c, u1, f1, vstar, e1, mon);
                        for (int j = 0; j < c.nx; ++j) {
                            vnew[j] = 0.5 * (v[j] + vstar[j] + k * e1[j]);
                            if (!std::isfinite(vnew[j])) mon.finite = false;
                        }
                    } else {
                        const bool is_psi = kind == PdeKind::Psi;
                        // predictor: (I - k D) v* = v + k E(v, t_later)
                        if (is_psi)
                            explicit_psi(c, u0, f0, v, e0, mon);
                        else
                            explicit_phi(c, u0, f0, eps, v, e0, mon);
                        for (int j = 0; j < c.nx; ++j) rhs[j] = v[j] + k * e0[j];
                        pred.solve(rhs, vstar, scratch);
                        // corrector: (I - k/2 D) v' = v + k/2 (E(v) + E(v*)) + k/2 D v
                        if (is_psi)
                            explicit_psi(c, u1, f1, vstar, e1, mon);
                        else
                            explicit_phi(c, u1, f1, eps, vstar, e1, mon);
                        for (int j = 0; j < c.nx; ++j)
                            rhs[j] = v[j] + 0.5 * k * (e0[j] + e1[j]) +
                                     0.5 * k * apply_diffusion(v, j, c.nx, c.dx, eps, c.a[j]);
                        corr.solve(rhs, vnew, scratch);
                        if (kind == PdeKind::Phi)
                            for (int j = 0; j < c.nx; ++j)
                                if (vnew[j] < 0.0) mon.finite = false;  // oscillation guard
                    }

                    if (!mon.finite || k * mon.max_speed > kCfl * c.dx ||
                        k * mon.max_rate > 0.5)
                        throw CflBreach{};
                    v.swap(vnew);
                    u0.swap(u1);
                    f0.swap(f1);
                }
                std::copy(v.begin(), v.end(),
                          sol.values.begin() + static_cast<size_t>(i) * grid.nx);
            }
            return sol;
        } catch (const CflBreach&) {
            continue;  // refine and restart
        }
    }
    throw PdeError("pde1d: stability not reached within the substep cap; "
                   "refine nt or shrink the domain");
}

}  // namespace

double PdeSolution1D::value_at(double tq, double xq) const {
    const double span_t = T - t0;
    const double tol_t = 1e-9 * std::max(1.0, std::abs(span_t));
    const double tol_x = 1e-9 * std::max(1.0, grid.x_max - grid.x_min);
    if (tq < t0 - tol_t || tq > T + tol_t || xq < grid.x_min - tol_x ||
        xq > grid.x_max + tol_x)
        throw ArgumentError("pde1d: query (" + std::to_string(tq) + ", " + std::to_string(xq) +
                            ") outside the solved grid");
    double ft = (tq - t0) / span_t * grid.nt;
    double fx = (xq - grid.x_min) / grid.dx();
    int i = std::clamp(static_cast<int>(ft), 0, grid.nt - 1);
    int j = std::clamp(static_cast<int>(fx), 0, grid.nx - 2);
    double wt = std::clamp(ft - i, 0.0, 1.0);
    double wx = std::clamp(fx - j, 0.0, 1.0);
    const double* r0 = row(i);
    const double* r1 = row(i + 1);
    double v0 = r0[j] * (1.0 - wx) + r0[j + 1] * wx;
    double v1 = r1[j] * (1.0 - wx) + r1[j + 1] * wx;
    return v0 * (1.0 - wt) + v1 * wt;
}

void PdeSolution1D::to_csv(std::ostream& os, int max_time_rows) const {
    char buf[32];
    os << "t";
    for (int j = 0; j < grid.nx; ++j) {
        std::snprintf(buf, sizeof buf, "%.17g", grid.x(j));
        os << "," << buf;
    }
    os << "\n";
    int stride = std::max(1, (grid.nt + max_time_rows - 1) / max_time_rows);
    for (int i = 0; i <= grid.nt; i += (i + stride > grid.nt && i < grid.nt) ? grid.nt - i : stride) {
        std::snprintf(buf, sizeof buf, "%.17g", t(i));
        os << buf;
        const double* r = row(i);
        for (int j = 0; j < grid.nx; ++j) {
            std::snprintf(buf, sizeof buf, "%.17g", r[j]);
            os << "," << buf;
        }
        os << "\n";
    }
}

Grid1D default_grid(const ProblemSpec& spec, const ControlPolicy& control, PdeKind kind) {
    if (spec.model.dim != 1)
        throw ArgumentError("pde1d supports one-dimensional problems only");
    const double tau = spec.horizon();
    const double x0 = spec.x0[0];

    // probe the uncontrolled and controlled flows with coarse Euler steps
    double dev = 0.0, sig_max = 0.0;
    const int n = 200;
    for (int mode = -1; mode <= 1; ++mode) {
        double x = x0;
        for (int k = 0; k <= n; ++k) {
            double t = spec.t0 + tau * k / n;
            Vec xv{x};
            Mat a = diffusion_matrix(spec.model, xv);
            sig_max = std::max(sig_max, std::sqrt(a(0, 0)));
            dev = std::max(dev, std::abs(x - x0));
            if (k == n) break;
            double f = spec.model.drift(xv)[0];
            if (mode != 0) {
                Vec u = control.u(t, xv);
                f += mode * std::sqrt(a(0, 0)) * u[0];
            }
            if (!std::isfinite(f))
                throw EvalError("default_grid: flow probe hit non-finite drift");
            x += f * tau / n;
            if (std::abs(x - x0) > 50.0 * std::max(1.0, std::abs(x0))) break;  // runaway flow
        }
    }

    double r = 6.0 * std::max({1.0, std::sqrt(spec.epsilon * tau) * sig_max, dev});
    Grid1D g;
    g.x_min = x0 - r;
    g.x_max = x0 + r;
    g.nx = 801;
    g.nt = 4000;

    if (kind == PdeKind::Phi && !spec.cost.stopped()) {
        // phi = exp(-2h/eps) varies on the length scale eps / (2|h'|); the
        // grid has to resolve that scale over the region whose values the
        // solve reports (the interior third plus one diffusive width), or the
        // log of the solution picks up O((dx 2h'/eps)^2) errors there.
        double span = g.x_max - g.x_min;
        double margin = sig_max * std::sqrt(spec.epsilon * tau);
        double lo = std::max(g.x_min, g.x_min + span / 3.0 - margin);
        double hi = std::min(g.x_max, g.x_max - span / 3.0 + margin);
        double smax = 0.0;
        const int np = 400;
        for (int j = 0; j <= np; ++j) {
            double x = lo + (hi - lo) * j / np;
            double e = 1e-5 * std::max(1.0, std::abs(x));
            double hp = (spec.cost.h(Vec{x + e}) - spec.cost.h(Vec{x - e})) / (2.0 * e);
            if (std::isfinite(hp))
                smax = std::max(smax, 2.0 * std::abs(hp) / spec.epsilon);
        }
        int need = static_cast<int>(std::ceil(span * smax / 0.06)) | 1;
        g.nx = std::clamp(need, g.nx, 4801);
    }
    return g;
}

PdeSolution1D solve_psi(const ProblemSpec& spec, const ControlPolicy& control,
                        const Grid1D& grid) {
    if (spec.cost.stopped())
        throw ArgumentError("pde1d oracles cover smooth terminal costs only");
    std::vector<double> terminal(grid.nx);
    for (int j = 0; j < grid.nx; ++j) {
        terminal[j] = 2.0 * spec.cost.h(Vec{grid.x(j)});
        if (!std::isfinite(terminal[j]))
            throw EvalError("pde1d: terminal cost non-finite at x = " + std::to_string(grid.x(j)));
    }
    return march(spec, control, grid, PdeKind::Psi, terminal);
}

PdeSolution1D solve_phi(const ProblemSpec& spec, const ControlPolicy& control,
                        const Grid1D& grid) {
    if (spec.cost.stopped())
        throw ArgumentError("pde1d oracles cover smooth terminal costs only");
    std::vector<double> terminal(grid.nx);
    double max_exponent = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < grid.nx; ++j) {
        double e = -2.0 * spec.cost.h(Vec{grid.x(j)}) / spec.epsilon;
        if (std::isnan(e))
            throw EvalError("pde1d: terminal cost non-finite at x = " + std::to_string(grid.x(j)));
        max_exponent = std::max(max_exponent, e);
        terminal[j] = std::exp(e);
    }
    if (max_exponent < -700.0)
        throw PdeError("pde1d: exp(-2h/eps) underflows across the whole grid; "
                       "use solve_psi at this epsilon");
    return march(spec, control, grid, PdeKind::Phi, terminal);
}

PdeSolution1D solve_v0_hjb(const ProblemSpec& spec, const ControlPolicy& control,
                           const Grid1D& grid) {
    if (spec.cost.stopped())
        throw ArgumentError("pde1d oracles cover smooth terminal costs only");
    std::vector<double> terminal(grid.nx);
    for (int j = 0; j < grid.nx; ++j) {
        terminal[j] = 2.0 * spec.cost.h(Vec{grid.x(j)});
        if (!std::isfinite(terminal[j]))
            throw EvalError("pde1d: terminal cost non-finite at x = " + std::to_string(grid.x(j)));
    }
    return march(spec, control, grid, PdeKind::V0, terminal);
}

}  // namespace isdiff
