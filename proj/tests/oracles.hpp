#pragma once

// Closed-form reference values used to pin the numerical modules.  Everything
// here is derived independently of the library code: Gaussian integrals,
// Riccati solutions, and Euler-Lagrange minimizers worked out by hand.

#include <cmath>

namespace oracle {

// ---------------------------------------------------------------------------
// linear_gaussian: dX = mu dt + s sqrt(eps) dW, h(x) = kappa x, X(t0) = x0.
// X_T ~ N(x0 + mu*tau, eps*s^2*tau) with tau = T - t0.

// theta = E exp(-h(X_T)/eps) = exp((-kappa*m + kappa^2 s^2 tau/2)/eps).
inline double lg_theta(double mu, double s, double kappa, double tau,
                       double x0, double eps) {
    double m = x0 + mu * tau;
    return std::exp((-kappa * m + 0.5 * kappa * kappa * s * s * tau) / eps);
}

// Second moment of the IS estimator under constant control c:
//   Q(c) = exp([c^2 tau + 2 kappa s c tau + 2 kappa^2 s^2 tau
//               - 2 kappa x0 - 2 kappa mu tau] / eps).
// Derivation: Gamma = exp(-kappa X/eps) Z with X = x0 + (mu+sc)tau + sqrt(eps) s W,
// log Z = -c^2 tau/(2 eps) - (c/sqrt(eps)) W, then complete the square in W.
inline double lg_Q_const(double mu, double s, double kappa, double tau,
                         double x0, double c, double eps) {
    double e = c * c * tau + 2.0 * kappa * s * c * tau
             + 2.0 * kappa * kappa * s * s * tau
             - 2.0 * kappa * x0 - 2.0 * kappa * mu * tau;
    return std::exp(e / eps);
}

// Decay rate of Q(c); exact (the exponent is proportional to 1/eps).
inline double lg_v0_const(double mu, double s, double kappa, double tau,
                          double x0, double c) {
    return 2.0 * kappa * x0 + 2.0 * kappa * mu * tau
         - 2.0 * kappa * s * c * tau - c * c * tau
         - 2.0 * kappa * kappa * s * s * tau;
}

// G = -eps log theta (exact, eps-free).
inline double lg_G(double mu, double s, double kappa, double tau, double x0) {
    return kappa * (x0 + mu * tau) - 0.5 * kappa * kappa * s * s * tau;
}

// ---------------------------------------------------------------------------
// ou_quadratic: dX = -gamma X dt + sqrt(eps) dW, h(x) = c x^2 / 2.
// X_T ~ N(m, eps*w) with m = x0 e^{-gamma tau}, w = (1 - e^{-2 gamma tau})/(2 gamma).

inline double ou_w(double gamma, double tau) {
    double z = 2.0 * gamma * tau;
    if (std::fabs(z) < 1e-8) return tau * (1.0 - 0.5 * z);
    return (1.0 - std::exp(-z)) / (2.0 * gamma);
}

inline double ou_theta(double gamma, double c, double tau, double x0, double eps) {
    double m = x0 * std::exp(-gamma * tau);
    double w = ou_w(gamma, tau);
    return std::exp(-0.5 * c * m * m / (eps * (1.0 + c * w)))
         / std::sqrt(1.0 + c * w);
}

// Second moment under zero control: Q = E exp(-c X_T^2 / eps).
inline double ou_Q_zero(double gamma, double c, double tau, double x0, double eps) {
    double m = x0 * std::exp(-gamma * tau);
    double w = ou_w(gamma, tau);
    return std::exp(-c * m * m / (eps * (1.0 + 2.0 * c * w)))
         / std::sqrt(1.0 + 2.0 * c * w);
}

// -eps log Q = v0 + eps v1 exactly (Q is Gaussian, the rate is affine in eps).
inline double ou_v0_zero(double gamma, double c, double tau, double x0) {
    double m = x0 * std::exp(-gamma * tau);
    return c * m * m / (1.0 + 2.0 * c * ou_w(gamma, tau));
}

inline double ou_v1_zero(double gamma, double c, double tau) {
    return 0.5 * std::log(1.0 + 2.0 * c * ou_w(gamma, tau));
}

inline double ou_G(double gamma, double c, double tau, double x0) {
    double m = x0 * std::exp(-gamma * tau);
    return 0.5 * c * m * m / (1.0 + c * ou_w(gamma, tau));
}

// Frozen values at the catalog defaults gamma=1, c=1, T=1, x0=1:
constexpr double kOuTheta025   = 0.6916854579585995;   // theta at eps=0.25
constexpr double kOuTheta05    = 0.7602271433902217;   // theta at eps=0.5
constexpr double kOuQZero05    = 0.6333713378329955;   // Q(zero control) at eps=0.5
constexpr double kOuG          = 0.04724297487404387;
constexpr double kOuV0Zero     = 0.07257888349575384;
constexpr double kOuV1Zero     = 0.3115406301998319;
constexpr double kOuV0Hess     = 0.14515776699150768;  // d^2 v0/dx^2 = 2c e^{-2}/(1+2cw)
constexpr double kOuCharEnd    = 0.19728986013635375;  // psi(T) for the zero-control characteristic

// ---------------------------------------------------------------------------
// rest_point_exit, L=1: drift -x, exit at |x| = sqrt(2L).  For paths from
// x0=0 reaching B = sqrt(2L) in time t (EL solution phi = B sinh(s)/sinh(t)):
//   plain action         G(t)  = B^2 / (1 - e^{-2t})               (decreasing in t)
//   v0 under u = 2x:     J(t)  = B^2 (sinh 2t + 3 cosh 2t - 3)/(4 sinh^2 t)
// and J(t) - G(t) = 2L identically: the stationary subsolution is tight.
inline double rest_G(double L, double t) {
    return 2.0 * L / (1.0 - std::exp(-2.0 * t));
}
inline double rest_v0(double L, double t) {
    double sh = std::sinh(t);
    return 2.0 * L * (std::sinh(2.0 * t) + 3.0 * std::cosh(2.0 * t) - 3.0)
         / (4.0 * sh * sh);
}

} // namespace oracle
