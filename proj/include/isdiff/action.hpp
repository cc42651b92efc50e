#pragma once

// Variational solvers for the zero-noise rates.
//
//   solve_G  : minimize  int_t0^T (1/2) |phid - b(phi)|^2_{a^{-1}} ds + h(phi(T))
//   solve_v0 : minimize  int_t0^T [ (1/2) |phid - (b - sigma u)(phi)|^2_{a^{-1}}
//                                   - |u(s, phi)|^2 ] ds + 2 h(phi(T))
//
// over absolutely continuous paths started at x0.  Paths are discretized on a
// uniform grid (interior nodes free, start pinned), the running integrand is
// evaluated at segment midpoints, and the resulting finite-dimensional
// objective is minimized by L-BFGS with backtracking line search from several
// deterministic starts (straight lines to probed terminal points, the
// controlled drift flow, and smooth perturbations of the best of those).
// Node gradients are analytic given local coefficient Jacobians, which come
// from central finite differences of the model maps.
//
// v0_gradient / v0_hessian finite-difference the optimal value in the initial
// state; V0Field caches value solves across (s, x) queries for the expansion
// pipeline.

#include <mutex>
#include <unordered_map>

#include "isdiff/model.hpp"

namespace isdiff {

struct SolverOptions {
    int nodes = 200;              // time segments
    int max_iterations = 500;
    double gradient_tolerance = 1e-8;
    int restarts = 5;             // starts beyond the first
    int lbfgs_memory = 10;
    double unbounded_threshold = -1e6;
    double perturb_scale = 0.5;
    uint64_t perturb_seed = 0x2545F4914F6CDD1DULL;
    // steps for finite differences of the value in the initial state
    double fd_gradient_step = 1e-3;
    double fd_hessian_step = 1e-2;
};

struct DiscretePath {
    std::vector<double> times;
    std::vector<Vec> states;  // states[k] at times[k], k = 0..nodes
};

struct VariationalResult {
    double value = 0.0;
    DiscretePath optimizer;
    bool converged = false;
    bool unbounded = false;  // objective fell below the unbounded threshold
    double gradient_norm = 0.0;
    int iterations = 0;
    int restarts_used = 0;
};

// Quasipotential-style rate G(t0, x0); requires a smooth terminal cost.
VariationalResult solve_G(const ProblemSpec& spec, const SolverOptions& opts = {});

// Second-moment rate v0(t0, x0) for the given control.
VariationalResult solve_v0(const ProblemSpec& spec, const ControlPolicy& control,
                           const SolverOptions& opts = {});

// Central differences of the v0 value in the initial state.  Stencil solves
// that fail to converge raise SolveError naming the offending point.
Vec v0_gradient(const ProblemSpec& spec, const ControlPolicy& control, const Vec& x,
                const SolverOptions& opts = {});
Mat v0_hessian(const ProblemSpec& spec, const ControlPolicy& control, const Vec& x,
               const SolverOptions& opts = {});

// Cache of v0(s, x) solves over the expansion pipeline's query points.
// The first solve (longest horizon) runs the full multistart schedule; later
// solves at interior times are local refinements from cheap starts.
class V0Field {
  public:
    V0Field(const ProblemSpec& spec, const ControlPolicy& control, const SolverOptions& opts);

    double value(double s, const Vec& x);
    Vec gradient(double s, const Vec& x);   // step fd_gradient_step * max(1, |x|)
    Mat hessian(double s, const Vec& x);    // step fd_hessian_step * max(1, |x|)

  private:
    double solve_at(double s, const Vec& x, bool full_restarts);

    ProblemSpec spec_;
    ControlPolicy control_;  // by value: callers may pass temporaries
    SolverOptions opts_;
    std::unordered_map<std::string, double> cache_;
    std::mutex mutex_;
    bool first_done_ = false;
};

}  // namespace isdiff
