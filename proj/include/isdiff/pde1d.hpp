#pragma once

// 1D finite-difference oracles for smooth-cost problems.
//
//   solve_psi : Psi^eps(t,x) = -eps log E-bar[ exp(-2h/eps + (1/eps) int |u|^2) ],
//               the exact second-moment rate, from the backward PDE
//                 Psi_t + f Psi_x + (eps/2) a Psi_xx - (a/2) (Psi_x)^2 - u^2 = 0,
//                 Psi(T,.) = 2h,   f = b - sigma u.
//   solve_phi : the linear companion Phi = exp(-Psi/eps) from
//                 Phi_t + f Phi_x + (eps/2) a Phi_xx + (u^2/eps) Phi = 0,
//                 Phi(T,.) = exp(-2h/eps).
//   solve_v0_hjb : the eps -> 0 limit
//                 v_t + f v_x - (a/2)(v_x)^2 - u^2 = 0,  v(T,.) = 2h,
//               by a monotone Lax-Friedrichs scheme.
//
// Marching runs backward from T with a predictor-corrector IMEX step:
// Crank-Nicolson on the diffusion, Heun on transport / nonlinearity / source,
// second-order upwind-biased transport differences.  Steps violating the
// advective CFL bound (or producing non-finite values) restart the solve with
// the substep count doubled, up to a x64 cap.  Boundary rows use one-sided
// differences and zero-curvature ghost values.

#include <iosfwd>
#include <vector>

#include "isdiff/model.hpp"

namespace isdiff {

struct Grid1D {
    double x_min = -6.0;
    double x_max = 6.0;
    int nx = 801;
    int nt = 4000;

    double dx() const { return (x_max - x_min) / (nx - 1); }
    double x(int j) const { return x_min + j * dx(); }
};

enum class PdeKind { Psi, Phi, V0 };

struct PdeSolution1D {
    Grid1D grid;
    double t0 = 0.0, T = 1.0;
    PdeKind kind = PdeKind::Psi;
    int substeps = 1;                // CFL refinement factor actually used
    std::vector<double> values;      // (nt+1) rows of nx, row i at t0 + i dt

    double t(int i) const { return t0 + (T - t0) * i / grid.nt; }
    const double* row(int i) const { return values.data() + static_cast<size_t>(i) * grid.nx; }

    // bilinear interpolation; queries outside the grid are rejected
    double value_at(double t, double x) const;

    // matrix layout: header row of x nodes, then one row per stored time
    // (subsampled to at most max_time_rows)
    void to_csv(std::ostream& os, int max_time_rows = 201) const;
};

// Domain sized from the controlled flows and diffusive spread so that
// boundary influence at the center stays negligible.
// domain from coarse flow probes; for Phi the node count also resolves the
// terminal exponential's length scale eps / (2|h'|)
Grid1D default_grid(const ProblemSpec& spec, const ControlPolicy& control,
                    PdeKind kind = PdeKind::Psi);

PdeSolution1D solve_psi(const ProblemSpec& spec, const ControlPolicy& control,
                        const Grid1D& grid);

// Rejects configurations whose terminal data underflows everywhere
// (max_x -2h/eps < -700), pointing at solve_psi instead.
PdeSolution1D solve_phi(const ProblemSpec& spec, const ControlPolicy& control,
                        const Grid1D& grid);

PdeSolution1D solve_v0_hjb(const ProblemSpec& spec, const ControlPolicy& control,
                           const Grid1D& grid);

}  // namespace isdiff
