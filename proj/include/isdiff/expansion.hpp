#pragma once

// Small-noise expansion of the second-moment rate,
//
//   -eps log Q(eps) ~ v0 + eps v1,
//
// where v0 comes from the variational solver and v1 transports the diffusion
// correction along the zero-noise characteristic:
//
//   psi' = b(psi) - sigma(psi) u(s, psi) - a(psi) grad v0(s, psi),
//   psi(t0) = x0,
//   v1 = int_t0^T (1/2) a(psi(s)) : grad^2 v0(s, psi(s)) ds.
//
// Smooth terminal costs only; for stopped indicator costs the report falls
// back to Monte Carlo columns and marks the expansion unavailable.

#include <functional>
#include <string>
#include <vector>

#include "isdiff/action.hpp"
#include "isdiff/model.hpp"
#include "isdiff/pde1d.hpp"
#include "isdiff/simulate.hpp"

namespace isdiff {

struct CharacteristicPath {
    std::vector<double> times;
    std::vector<Vec> states;
    bool crossed_warning = false;  // left the advisory box
};

// Carries whatever was integrated before the failure.
struct CharacteristicError : Error {
    CharacteristicError(const std::string& msg, CharacteristicPath p)
        : Error(msg), partial(std::move(p)) {}
    CharacteristicPath partial;
};

using GradientProvider = std::function<Vec(double, const Vec&)>;
using HessianProvider = std::function<Mat(double, const Vec&)>;

// Fourth-order Runge-Kutta on the characteristic ODE.  An empty box disables
// the excursion warning.
CharacteristicPath integrate_characteristic(const ProblemSpec& spec,
                                            const ControlPolicy& control,
                                            const GradientProvider& grad_v0, int steps,
                                            const Vec& box_lo = {}, const Vec& box_hi = {});

struct V1Quadrature {
    double value = 0.0;
    std::vector<double> integrand;  // (1/2) a : grad^2 v0 at the path nodes
    std::vector<double> partial;    // running trapezoid sums, partial[0] = 0
};

V1Quadrature compute_v1(const ProblemSpec& spec, const HessianProvider& hess_v0,
                        const CharacteristicPath& path);

struct EpsPrediction {
    double eps = 0.0;
    double log_q = 0.0;  // -v0/eps - v1
    double q = 0.0;
};

std::vector<EpsPrediction> predict_second_moment(double v0, double v1,
                                                 const std::vector<double>& eps_list);

struct ExpansionOptions {
    std::vector<double> eps_list;
    bool with_mc = true;
    SimulationConfig sim;
    SolverOptions action;
    int steps = 400;               // characteristic RK4 steps
    Vec box_lo, box_hi;            // advisory excursion box (optional)
    bool with_pde = true;          // only honored for 1D smooth problems
    bool pde_auto_grid = true;     // per-eps default_grid; else pde_grid below
    Grid1D pde_grid;
};

struct ExpansionRow {
    double eps = 0.0;
    bool have_mc = false;
    double mc_rate = 0.0;   // -eps log Q_hat
    double mc_se = 0.0;
    bool have_pde = false;
    double pde_psi = 0.0;
    double expansion = 0.0;      // v0 + eps v1 (NaN when unavailable)
    double residual = 0.0;       // pde_psi - expansion (NaN when unavailable)
    double order_estimate = 0.0; // running log-log slope of |residual|
    std::string note;            // per-row failure notes
};

struct ExpansionReport {
    bool expansion_available = false;
    double v0 = 0.0, v1 = 0.0;
    bool v1_negative_flag = false;  // v0 > 0 with v1 < 0: prefactor fights the rate
    bool characteristic_warning = false;
    std::vector<ExpansionRow> rows;
};

ExpansionReport expansion_report(const ProblemSpec& spec, const ControlPolicy& control,
                                 const ExpansionOptions& opts,
                                 const std::string& control_label = "control",
                                 const std::string& problem_label = "problem");

}  // namespace isdiff
