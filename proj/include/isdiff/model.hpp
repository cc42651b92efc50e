#pragma once

// Problem definitions for the small-noise diffusion
//
//     dX = b(X) dt + sqrt(eps) sigma(X) dW,   X(t0) = x0,
//
// with a rare-event functional theta = E[exp(-h(X_T)/eps)] for smooth h, or
// theta = P(exit through the target set before T) for stopped indicator
// costs.  Controls u enter as an extra drift sigma(x) u(t,x) under the
// sampling measure; subsolutions U(t,x) of the limiting HJB equation supply
// the standard control choice u = -sigma^T grad U.

#include <functional>
#include <limits>
#include <optional>
#include <vector>

#include "isdiff/linalg.hpp"

namespace isdiff {

struct DiffusionModel {
    int dim = 1;
    std::function<Vec(const Vec&)> drift;       // b(x)
    std::function<Mat(const Vec&)> diffusion;   // sigma(x), d x d
    std::function<Mat(const Vec&)> drift_jacobian;  // optional, may be null
};

enum class Region { Inside, ExitTarget, ExitOther };

struct TerminalCost {
    enum class Kind { Smooth, StoppedIndicator };
    Kind kind = Kind::Smooth;
    std::function<double(const Vec&)> h;  // smooth cost; zero map for stopped kind
    // stopped kind only: classify the current state
    std::function<Region(const Vec&)> classify;

    bool stopped() const { return kind == Kind::StoppedIndicator; }
};

struct ControlPolicy {
    std::function<Vec(double, const Vec&)> u;  // (t, x) -> control in R^d
    double bound = std::numeric_limits<double>::infinity();
};

inline ControlPolicy zero_control(int dim) {
    ControlPolicy c;
    c.u = [dim](double, const Vec&) { return Vec(dim, 0.0); };
    c.bound = 0.0;
    return c;
}

inline ControlPolicy constant_control(Vec value) {
    ControlPolicy c;
    double b = norm2(value);
    c.u = [v = std::move(value)](double, const Vec&) { return v; };
    c.bound = b;
    return c;
}

// A (candidate) subsolution of U_t + b . grad U - |sigma^T grad U|^2 / 2 >= 0
// with U(T, .) <= terminal data.  Gradient and time derivative are required;
// the Hessian is optional and only used by curvature diagnostics.
struct Subsolution {
    std::function<double(double, const Vec&)> value;
    std::function<Vec(double, const Vec&)> gradient_x;
    std::function<double(double, const Vec&)> time_derivative;
    std::function<Mat(double, const Vec&)> hessian_x;  // may be null
};

struct ProblemSpec {
    DiffusionModel model;
    TerminalCost cost;
    double t0 = 0.0;
    double T = 1.0;
    Vec x0;
    double epsilon = 0.25;

    double horizon() const { return T - t0; }
};

// sigma(x) sigma(x)^T, checked finite and positive definite.  Violations are
// rejected here, at evaluation time, with the offending point in the message.
Mat diffusion_matrix(const DiffusionModel& model, const Vec& x);

// u(t,x) = -sigma(x)^T grad U(t,x)
ControlPolicy control_from_subsolution(const DiffusionModel& model, const Subsolution& sub);

struct SubsolutionCheckOptions {
    Vec box_lo, box_hi;   // spatial sampling box
    int t_points = 21;
    int x_points = 101;   // per spatial dimension (capped product below)
    int max_points = 200000;
    double tolerance = 1e-8;
};

struct SubsolutionReport {
    double min_interior_residual = 0.0;  // min over samples of the HJB inequality slack
    double max_terminal_excess = 0.0;    // max over samples of U(T,x) - terminal data
    int interior_samples = 0;
    int terminal_samples = 0;
    bool pass = false;
};

// Samples the subsolution inequality over a (t, x) grid.  Residuals are
// compared against a tolerance scaled by max(1, local magnitudes).  For
// stopped indicator costs the terminal comparison uses the indicator's
// effective data: U(t,x) <= 0 on the target set, no constraint elsewhere.
SubsolutionReport check_subsolution(const ProblemSpec& spec, const Subsolution& sub,
                                    const SubsolutionCheckOptions& opts);

}  // namespace isdiff
