#pragma once

// Built-in benchmark problems.  Each comes with its natural subsolution and,
// where one exists, a closed-form value of theta(eps) used for validation.
//
//   linear_gaussian   d=1, b = mu, sigma = s, h(x) = kappa x
//                     params: mu, s, kappa, T, x0, t0, eps
//   ou_quadratic      d=1, b(x) = -gamma x, sigma = 1, h(x) = c x^2 / 2
//                     params: gamma, c, T, x0, t0, eps
//   rest_point_exit   d=1, V(x) = x^2/2, b = -V', sigma = 1,
//                     exit from {V < L} before T, started at the rest point
//                     params: L, T, x0, t0, eps

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "isdiff/model.hpp"

namespace isdiff {

struct ReferenceValues {
    std::function<double(double)> theta;  // theta as a function of eps; may be null
    double G = std::numeric_limits<double>::quiet_NaN();  // limiting rate from (t0, x0)
    bool has_theta() const { return static_cast<bool>(theta); }
    bool has_G() const { return std::isfinite(G); }
};

struct BuiltinProblem {
    std::string name;
    ProblemSpec spec;
    std::optional<Subsolution> subsolution;
    ReferenceValues ref;
    std::map<std::string, double> params;  // resolved values, defaults filled in
};

std::vector<std::string> catalog_names();

// Unknown names and unknown parameter keys are rejected with the admissible
// set in the message.
BuiltinProblem builtin_problem(const std::string& name,
                               const std::map<std::string, double>& params = {});

}  // namespace isdiff
