#include "doctest.h"
#include "isdiff/catalog.hpp"
#include "isdiff/errors.hpp"
#include "isdiff/pde1d.hpp"
#include "oracles.hpp"

#include <cmath>
#include <sstream>

using namespace isdiff;

namespace {

Grid1D grid(double lo, double hi, int nx, int nt) {
    Grid1D g;
    g.x_min = lo;
    g.x_max = hi;
    g.nx = nx;
    g.nt = nt;
    return g;
}

// Psi for linear_gaussian under zero control is affine in x:
//   Psi(t,x) = 2 kappa (x + mu (T-t)) - 2 kappa^2 s^2 (T-t)
// (plug the ansatz into the PDE: the eps-diffusion and the boundary rows see
// zero curvature, so a second-order scheme reproduces it to rounding).
double lg_psi(double mu, double s, double kappa, double T, double t, double x) {
    double tau = T - t;
    return 2.0 * kappa * (x + mu * tau) - 2.0 * kappa * kappa * s * s * tau;
}

} // namespace

TEST_CASE("psi reproduces the affine linear_gaussian solution exactly") {
    auto p = builtin_problem("linear_gaussian", {{"mu", 0.3}});
    p.spec.epsilon = 0.5;
    auto g = grid(-6.0, 6.0, 401, 400);
    auto sol = solve_psi(p.spec, zero_control(1), g);
    for (double t : {0.0, 0.33, 0.7}) {
        for (double x : {-2.0, -0.4, 0.0, 1.3, 2.5}) {
            CAPTURE(t);
            CAPTURE(x);
            CHECK(sol.value_at(t, x) ==
                  doctest::Approx(lg_psi(0.3, 1.0, 1.0, 1.0, t, x)).epsilon(1e-9));
        }
    }
}

TEST_CASE("psi matches the ou_quadratic closed form") {
    auto p = builtin_problem("ou_quadratic");
    p.spec.epsilon = 0.25;
    auto g = grid(-5.0, 7.0, 801, 2000);
    auto sol = solve_psi(p.spec, zero_control(1), g);
    // -eps log Q is affine in eps: v0 + eps v1 exactly
    double want = oracle::kOuV0Zero + 0.25 * oracle::kOuV1Zero;
    CHECK(sol.value_at(0.0, 1.0) == doctest::Approx(want).epsilon(2e-3));
    // interior points at a later time: tau = 0.5
    double v0_half = oracle::ou_v0_zero(1.0, 1.0, 0.5, 0.4);
    double v1_half = oracle::ou_v1_zero(1.0, 1.0, 0.5);
    CHECK(sol.value_at(0.5, 0.4) ==
          doctest::Approx(v0_half + 0.25 * v1_half).epsilon(2e-3));
}

TEST_CASE("phi matches the Gaussian second moment and -eps log phi matches psi") {
    auto p = builtin_problem("ou_quadratic");
    p.spec.epsilon = 0.5;
    // phi needs dx small against eps/(2|h'|); this matches what default_grid
    // picks for the Phi kind on this domain
    auto g = grid(-5.0, 7.0, 2401, 1500);
    auto phi = solve_phi(p.spec, zero_control(1), g);
    // Phi(t0, x0) is exactly Q(eps) for the zero control
    CHECK(phi.value_at(0.0, 1.0) == doctest::Approx(oracle::kOuQZero05).epsilon(2e-3));

    auto psi = solve_psi(p.spec, zero_control(1), g);
    // the two routes agree on the interior third of the domain
    double lo = g.x_min + (g.x_max - g.x_min) / 3.0;
    double hi = g.x_min + 2.0 * (g.x_max - g.x_min) / 3.0;
    double worst = 0.0;
    for (int j = 0; j < 40; ++j) {
        double x = lo + (hi - lo) * j / 39.0;
        for (double t : {0.0, 0.4, 0.8}) {
            double a = -0.5 * std::log(phi.value_at(t, x));
            double b = psi.value_at(t, x);
            worst = std::max(worst, std::fabs(a - b));
        }
    }
    CHECK(worst < 1e-3);
}

TEST_CASE("psi respects the maximum principle under a constant control") {
    // No closed form here, but the backward march can only lower values:
    // the nonlinearity and the source -u^2 are nonpositive, and the source
    // removes at most int u^2 over the horizon.  So the whole solution sits
    // in [min 2h - int u^2, max 2h].
    auto p = builtin_problem("ou_quadratic");
    p.spec.epsilon = 0.25;
    auto control = constant_control({0.6});
    auto g = grid(-4.0, 6.0, 401, 1200);
    auto sol = solve_psi(p.spec, control, g);
    double max_terminal = 0.0;
    for (int j = 0; j < g.nx; ++j)
        max_terminal = std::max(max_terminal, p.spec.cost.h({g.x(j)}) * 2.0);
    double lo = 1e30, hi = -1e30;
    for (int i = 0; i <= g.nt; ++i) {
        for (int j = 0; j < g.nx; ++j) {
            lo = std::min(lo, sol.row(i)[j]);
            hi = std::max(hi, sol.row(i)[j]);
        }
    }
    CHECK(hi <= max_terminal + 1e-8);
    CHECK(lo >= -0.36 - 1e-8); // -int u^2 = -0.36
}

TEST_CASE("v0 solver reproduces the affine and quadratic limits") {
    auto p = builtin_problem("linear_gaussian", {{"mu", 0.2}});
    auto g = grid(-6.0, 6.0, 401, 800);
    auto v = solve_v0_hjb(p.spec, zero_control(1), g);
    // affine solution is exact for the LF scheme as well
    CHECK(v.value_at(0.0, 0.0) ==
          doctest::Approx(lg_psi(0.2, 1.0, 1.0, 1.0, 0.0, 0.0)).epsilon(1e-7));
    CHECK(v.value_at(0.5, 1.0) ==
          doctest::Approx(lg_psi(0.2, 1.0, 1.0, 1.0, 0.5, 1.0)).epsilon(1e-7));

    auto q = builtin_problem("ou_quadratic");
    auto gq = grid(-5.0, 7.0, 1201, 2400);
    auto vq = solve_v0_hjb(q.spec, zero_control(1), gq);
    CHECK(vq.value_at(0.0, 1.0) == doctest::Approx(oracle::kOuV0Zero).epsilon(5e-3));
    double v0_half = oracle::ou_v0_zero(1.0, 1.0, 0.5, 0.4);
    CHECK(vq.value_at(0.5, 0.4) == doctest::Approx(v0_half).epsilon(5e-3));
}

TEST_CASE("grid halving shrinks the psi error") {
    auto p = builtin_problem("ou_quadratic");
    p.spec.epsilon = 0.25;
    double want = oracle::kOuV0Zero + 0.25 * oracle::kOuV1Zero;
    auto coarse = solve_psi(p.spec, zero_control(1), grid(-5.0, 7.0, 151, 300));
    auto fine = solve_psi(p.spec, zero_control(1), grid(-5.0, 7.0, 301, 600));
    double ec = std::fabs(coarse.value_at(0.0, 1.0) - want);
    double ef = std::fabs(fine.value_at(0.0, 1.0) - want);
    CHECK(ef * 2.0 <= ec);
}

TEST_CASE("phi rejects terminal data that underflows everywhere") {
    // custom smooth problem with h >= 10 on the whole grid and tiny eps
    DiffusionModel m;
    m.dim = 1;
    m.drift = [](const Vec&) { return Vec{0.0}; };
    m.diffusion = [](const Vec&) { return Mat::identity(1); };
    TerminalCost cost;
    cost.kind = TerminalCost::Kind::Smooth;
    cost.h = [](const Vec& x) { return x[0] * x[0] + 10.0; };
    ProblemSpec spec;
    spec.model = m;
    spec.cost = cost;
    spec.x0 = {0.0};
    spec.epsilon = 0.01;
    CHECK_THROWS_AS((void)solve_phi(spec, zero_control(1), grid(-3.0, 3.0, 101, 100)),
                    PdeError);
    // psi handles the same configuration fine
    auto sol = solve_psi(spec, zero_control(1), grid(-3.0, 3.0, 101, 100));
    CHECK(std::isfinite(sol.value_at(0.0, 0.0)));
}

TEST_CASE("queries outside the grid are rejected") {
    auto p = builtin_problem("linear_gaussian");
    auto sol = solve_psi(p.spec, zero_control(1), grid(-2.0, 2.0, 101, 100));
    CHECK_THROWS_AS((void)sol.value_at(0.0, 2.5), ArgumentError);
    CHECK_THROWS_AS((void)sol.value_at(-0.1, 0.0), ArgumentError);
    CHECK_THROWS_AS((void)sol.value_at(1.1, 0.0), ArgumentError);
    CHECK(std::isfinite(sol.value_at(1.0, 2.0))); // corners included
}

TEST_CASE("default grid covers the start point and controlled flows") {
    auto p = builtin_problem("ou_quadratic");
    auto control = control_from_subsolution(p.spec.model, *p.subsolution);
    auto g = default_grid(p.spec, control);
    CHECK(g.x_min < 1.0);
    CHECK(g.x_max > 1.0);
    CHECK(g.x_max - g.x_min >= 6.0); // several diffusive standard deviations
    CHECK(g.nx >= 401);
    CHECK(g.nt >= 1000);

    // the phi grid refines until dx resolves eps/(2|h'|) on the report region
    p.spec.epsilon = 0.5;
    auto gp = default_grid(p.spec, control, PdeKind::Phi);
    CHECK(gp.nx > 2 * g.nx);
    double span = gp.x_max - gp.x_min;
    double hi = gp.x_max - span / 3.0 + std::sqrt(0.5);
    CHECK(span / (gp.nx - 1) * 2.0 * hi / 0.5 <= 0.061);
}

TEST_CASE("pde solvers reject stopped problems and bad grids") {
    auto r = builtin_problem("rest_point_exit");
    CHECK_THROWS_AS((void)solve_psi(r.spec, zero_control(1), grid(-3, 3, 101, 100)),
                    ArgumentError);
    auto p = builtin_problem("linear_gaussian");
    CHECK_THROWS_AS((void)solve_psi(p.spec, zero_control(1), grid(3, -3, 101, 100)),
                    ArgumentError);
    CHECK_THROWS_AS((void)solve_psi(p.spec, zero_control(1), grid(-3, 3, 2, 100)),
                    ArgumentError);
}

TEST_CASE("csv export keeps the matrix shape") {
    auto p = builtin_problem("linear_gaussian");
    auto sol = solve_psi(p.spec, zero_control(1), grid(-2.0, 2.0, 21, 50));
    std::ostringstream os;
    sol.to_csv(os, 11);
    std::string s = os.str();
    // header + at most 11 time rows
    int lines = 0;
    for (char ch : s)
        if (ch == '\n') ++lines;
    CHECK(lines >= 5);
    CHECK(lines <= 12);
    // header starts with the time column label, then x nodes
    CHECK(s.substr(0, 2) == "t,");
}
