#include "isdiff/catalog.hpp"

#include <cmath>
#include <sstream>

#include "isdiff/errors.hpp"

namespace isdiff {

namespace {

std::map<std::string, double> resolve_params(const std::string& name,
                                             const std::map<std::string, double>& defaults,
                                             const std::map<std::string, double>& given) {
    std::map<std::string, double> out = defaults;
    for (const auto& [k, v] : given) {
        auto it = out.find(k);
        if (it == out.end()) {
            std::ostringstream os;
            os << "unknown parameter '" << k << "' for problem '" << name << "'; admissible:";
            for (const auto& [dk, dv] : defaults) os << " " << dk;
            throw CatalogError(os.str());
        }
        if (!std::isfinite(v))
            throw CatalogError("parameter '" + k + "' must be finite");
        it->second = v;
    }
    return out;
}

void require(bool cond, const std::string& msg) {
    if (!cond) throw CatalogError(msg);
}

// (1 - exp(-2 gamma tau)) / (2 gamma), continuous at gamma = 0
double ou_w(double gamma, double tau) {
    double z = 2.0 * gamma * tau;
    if (std::abs(z) < 1e-8) return tau * (1.0 - 0.5 * z);
    return (1.0 - std::exp(-z)) / (2.0 * gamma);
}

BuiltinProblem make_linear_gaussian(const std::map<std::string, double>& given) {
    auto p = resolve_params("linear_gaussian",
                            {{"mu", 0.0}, {"s", 1.0}, {"kappa", 1.0}, {"T", 1.0},
                             {"x0", 0.0}, {"t0", 0.0}, {"eps", 0.25}},
                            given);
    double mu = p["mu"], s = p["s"], kappa = p["kappa"];
    double T = p["T"], x0 = p["x0"], t0 = p["t0"], eps = p["eps"];
    require(s != 0.0, "linear_gaussian: s must be nonzero");
    require(T > t0, "linear_gaussian: T must exceed t0");
    require(eps > 0.0, "linear_gaussian: eps must be positive");

    BuiltinProblem bp;
    bp.name = "linear_gaussian";
    bp.params = p;
    bp.spec.model.dim = 1;
    bp.spec.model.drift = [mu](const Vec&) { return Vec{mu}; };
    bp.spec.model.diffusion = [s](const Vec&) {
        Mat m(1);
        m(0, 0) = s;
        return m;
    };
    bp.spec.model.drift_jacobian = [](const Vec&) { return Mat(1); };
    bp.spec.cost.kind = TerminalCost::Kind::Smooth;
    bp.spec.cost.h = [kappa](const Vec& x) { return kappa * x[0]; };
    bp.spec.t0 = t0;
    bp.spec.T = T;
    bp.spec.x0 = {x0};
    bp.spec.epsilon = eps;

    // U(t,x) = kappa x + kappa mu (T-t) - kappa^2 s^2 (T-t)/2 solves the HJB
    // with equality and matches h at T; it is the exact limiting value G.
    Subsolution sub;
    sub.value = [kappa, mu, s, T](double t, const Vec& x) {
        double tau = T - t;
        return kappa * x[0] + kappa * mu * tau - 0.5 * kappa * kappa * s * s * tau;
    };
    sub.gradient_x = [kappa](double, const Vec&) { return Vec{kappa}; };
    sub.time_derivative = [kappa, mu, s](double, const Vec&) {
        return -kappa * mu + 0.5 * kappa * kappa * s * s;
    };
    sub.hessian_x = [](double, const Vec&) { return Mat(1); };
    bp.subsolution = sub;

    double tau = T - t0;
    double m = x0 + mu * tau;
    double rate = kappa * m - 0.5 * kappa * kappa * s * s * tau;  // G(t0, x0)
    bp.ref.theta = [rate](double e) { return std::exp(-rate / e); };
    bp.ref.G = rate;
    return bp;
}

BuiltinProblem make_ou_quadratic(const std::map<std::string, double>& given) {
    auto p = resolve_params("ou_quadratic",
                            {{"gamma", 1.0}, {"c", 1.0}, {"T", 1.0}, {"x0", 1.0},
                             {"t0", 0.0}, {"eps", 0.25}},
                            given);
    double gamma = p["gamma"], c = p["c"];
    double T = p["T"], x0 = p["x0"], t0 = p["t0"], eps = p["eps"];
    require(gamma >= 0.0, "ou_quadratic: gamma must be nonnegative");
    require(c >= 0.0, "ou_quadratic: c must be nonnegative");
    require(T > t0, "ou_quadratic: T must exceed t0");
    require(eps > 0.0, "ou_quadratic: eps must be positive");

    BuiltinProblem bp;
    bp.name = "ou_quadratic";
    bp.params = p;
    bp.spec.model.dim = 1;
    bp.spec.model.drift = [gamma](const Vec& x) { return Vec{-gamma * x[0]}; };
    bp.spec.model.diffusion = [](const Vec&) {
        Mat m(1);
        m(0, 0) = 1.0;
        return m;
    };
    bp.spec.model.drift_jacobian = [gamma](const Vec&) {
        Mat m(1);
        m(0, 0) = -gamma;
        return m;
    };
    bp.spec.cost.kind = TerminalCost::Kind::Smooth;
    bp.spec.cost.h = [c](const Vec& x) { return 0.5 * c * x[0] * x[0]; };
    bp.spec.t0 = t0;
    bp.spec.T = T;
    bp.spec.x0 = {x0};
    bp.spec.epsilon = eps;

    // G(t,x) = P(t) x^2 / 2 with P(t) = c e^{-2 gamma (T-t)} / (1 + c w(t)),
    // w(t) = (1 - e^{-2 gamma (T-t)}) / (2 gamma).  P solves the Riccati
    // equation P' = 2 gamma P + P^2, so G is an exact classical solution.
    auto P = [gamma, c, T](double t) {
        double tau = T - t;
        double e2 = std::exp(-2.0 * gamma * tau);
        return c * e2 / (1.0 + c * ou_w(gamma, tau));
    };
    Subsolution sub;
    sub.value = [P](double t, const Vec& x) { return 0.5 * P(t) * x[0] * x[0]; };
    sub.gradient_x = [P](double t, const Vec& x) { return Vec{P(t) * x[0]}; };
    sub.time_derivative = [P, gamma](double t, const Vec& x) {
        double pt = P(t);
        return 0.5 * (2.0 * gamma * pt + pt * pt) * x[0] * x[0];
    };
    sub.hessian_x = [P](double t, const Vec&) {
        Mat m(1);
        m(0, 0) = P(t);
        return m;
    };
    bp.subsolution = sub;

    double tau = T - t0;
    double m = x0 * std::exp(-gamma * tau);
    double w = ou_w(gamma, tau);
    bp.ref.theta = [c, m, w](double e) {
        return std::exp(-0.5 * c * m * m / (e * (1.0 + c * w))) / std::sqrt(1.0 + c * w);
    };
    bp.ref.G = 0.5 * c * m * m / (1.0 + c * w);
    return bp;
}

BuiltinProblem make_rest_point_exit(const std::map<std::string, double>& given) {
    auto p = resolve_params("rest_point_exit",
                            {{"L", 1.0}, {"T", 2.0}, {"x0", 0.0}, {"t0", 0.0},
                             {"eps", 0.25}},
                            given);
    double L = p["L"], T = p["T"], x0 = p["x0"], t0 = p["t0"], eps = p["eps"];
    require(L > 0.0, "rest_point_exit: L must be positive");
    require(T > t0, "rest_point_exit: T must exceed t0");
    require(eps > 0.0, "rest_point_exit: eps must be positive");
    require(0.5 * x0 * x0 < L, "rest_point_exit: x0 must start inside {V < L}");

    BuiltinProblem bp;
    bp.name = "rest_point_exit";
    bp.params = p;
    bp.spec.model.dim = 1;
    bp.spec.model.drift = [](const Vec& x) { return Vec{-x[0]}; };  // b = -V'
    bp.spec.model.diffusion = [](const Vec&) {
        Mat m(1);
        m(0, 0) = 1.0;
        return m;
    };
    bp.spec.model.drift_jacobian = [](const Vec&) {
        Mat m(1);
        m(0, 0) = -1.0;
        return m;
    };
    bp.spec.cost.kind = TerminalCost::Kind::StoppedIndicator;
    bp.spec.cost.h = [](const Vec&) { return 0.0; };
    bp.spec.cost.classify = [L](const Vec& x) {
        return 0.5 * x[0] * x[0] >= L ? Region::ExitTarget : Region::Inside;
    };
    bp.spec.t0 = t0;
    bp.spec.T = T;
    bp.spec.x0 = {x0};
    bp.spec.epsilon = eps;

    // Reversed-potential subsolution U(x) = -2 (V(x) - L) = 2L - x^2, exact
    // stationary solution of the exit HJB with U = 0 on {V = L}.
    Subsolution sub;
    sub.value = [L](double, const Vec& x) { return 2.0 * L - x[0] * x[0]; };
    sub.gradient_x = [](double, const Vec& x) { return Vec{-2.0 * x[0]}; };
    sub.time_derivative = [](double, const Vec&) { return 0.0; };
    sub.hessian_x = [](double, const Vec&) {
        Mat m(1);
        m(0, 0) = -2.0;
        return m;
    };
    bp.subsolution = sub;
    // no closed-form theta or finite-T rate attached
    return bp;
}

}  // namespace

std::vector<std::string> catalog_names() {
    return {"linear_gaussian", "ou_quadratic", "rest_point_exit"};
}

BuiltinProblem builtin_problem(const std::string& name,
                               const std::map<std::string, double>& params) {
    if (name == "linear_gaussian") return make_linear_gaussian(params);
    if (name == "ou_quadratic") return make_ou_quadratic(params);
    if (name == "rest_point_exit") return make_rest_point_exit(params);
    std::ostringstream os;
    os << "unknown problem '" << name << "'; catalog:";
    for (const auto& n : catalog_names()) os << " " << n;
    throw CatalogError(os.str());
}

}  // namespace isdiff
