#include "doctest.h"
#include "isdiff/catalog.hpp"
#include "isdiff/errors.hpp"
#include "isdiff/expansion.hpp"
#include "oracles.hpp"

#include <cmath>

using namespace isdiff;

namespace {

// Closed-form v0 field for ou_quadratic under zero control:
//   v0(s, x) = P2(s) x^2 with P2(s) = c e^{-2 gamma (T-s)} / (1 + 2 c w(T-s)).
double ou_p2(double s) {
    double tau = 1.0 - s;
    return std::exp(-2.0 * tau) / (1.0 + 2.0 * oracle::ou_w(1.0, tau));
}

} // namespace

TEST_CASE("characteristic ODE with analytic gradients: ou closed form") {
    auto p = builtin_problem("ou_quadratic");
    GradientProvider grad = [](double s, const Vec& x) {
        return Vec{2.0 * ou_p2(s) * x[0]};
    };
    auto path = integrate_characteristic(p.spec, zero_control(1), grad, 400);
    REQUIRE(path.states.size() == 401);
    CHECK(path.times.front() == doctest::Approx(0.0));
    CHECK(path.times.back() == doctest::Approx(1.0));
    CHECK(path.states.front()[0] == doctest::Approx(1.0));
    // psi' = -psi - 2 P2(s) psi integrates to x0 e^{-1} / (1 + 2 c w)
    CHECK(path.states.back()[0] == doctest::Approx(oracle::kOuCharEnd).epsilon(1e-9));
    CHECK(!path.crossed_warning);
}

TEST_CASE("characteristic ODE for linear_gaussian has constant slope") {
    auto p = builtin_problem("linear_gaussian");
    GradientProvider grad = [](double, const Vec&) { return Vec{2.0}; };
    // zero control: psi' = -a grad v0 = -2
    auto path = integrate_characteristic(p.spec, zero_control(1), grad, 100);
    CHECK(path.states.back()[0] == doctest::Approx(-2.0).epsilon(1e-10));
    // optimal control u = -1: psi' = b - sigma u - a grad = 1 - 2 = -1
    auto path2 = integrate_characteristic(p.spec, constant_control({-1.0}), grad, 100);
    CHECK(path2.states.back()[0] == doctest::Approx(-1.0).epsilon(1e-10));
}

TEST_CASE("excursion box warning fires when the path leaves it") {
    auto p = builtin_problem("linear_gaussian");
    GradientProvider grad = [](double, const Vec&) { return Vec{2.0}; };
    auto path = integrate_characteristic(p.spec, zero_control(1), grad, 100,
                                         {-0.5}, {0.5});
    CHECK(path.crossed_warning);
    auto ok = integrate_characteristic(p.spec, zero_control(1), grad, 100,
                                       {-3.0}, {3.0});
    CHECK(!ok.crossed_warning);
}

TEST_CASE("v1 quadrature with analytic hessians: ou closed form") {
    auto p = builtin_problem("ou_quadratic");
    GradientProvider grad = [](double s, const Vec& x) {
        return Vec{2.0 * ou_p2(s) * x[0]};
    };
    HessianProvider hess = [](double s, const Vec&) {
        Mat h(1);
        h(0, 0) = 2.0 * ou_p2(s);
        return h;
    };
    auto path = integrate_characteristic(p.spec, zero_control(1), grad, 400);
    auto quad = compute_v1(p.spec, hess, path);
    // v1 = int (1/2) a : 2 P2 = int P2 = (1/2) log(1 + 2 c w)
    CHECK(quad.value == doctest::Approx(oracle::kOuV1Zero).epsilon(1e-5));
    REQUIRE(quad.integrand.size() == path.states.size());
    REQUIRE(quad.partial.size() == path.states.size());
    CHECK(quad.partial.front() == 0.0);
    CHECK(quad.partial.back() == doctest::Approx(quad.value));

    // trapezoid self-check: re-differencing the partial sums recovers the
    // integrand averages exactly
    for (size_t k = 1; k < quad.partial.size(); k += 37) {
        double dt = path.times[k] - path.times[k - 1];
        double avg = (quad.integrand[k - 1] + quad.integrand[k]) / 2.0;
        CHECK(quad.partial[k] - quad.partial[k - 1] == doctest::Approx(avg * dt).epsilon(1e-12));
    }
}

TEST_CASE("predict_second_moment maps (v0, v1) to rates") {
    auto pred = predict_second_moment(0.1, 0.3, {0.5, 0.25});
    REQUIRE(pred.size() == 2);
    CHECK(pred[0].eps == 0.5);
    CHECK(pred[0].log_q == doctest::Approx(-0.1 / 0.5 - 0.3));
    CHECK(pred[0].q == doctest::Approx(std::exp(-0.5)));
    CHECK(pred[1].log_q == doctest::Approx(-0.1 / 0.25 - 0.3));
}

TEST_CASE("full numeric pipeline: linear_gaussian zero control") {
    // v0 = -2, grad v0 = 2 (constant), hessian 0, so v1 = 0 and the
    // characteristic lands at -2 regardless of the numeric field.
    auto p = builtin_problem("linear_gaussian");
    ExpansionOptions o;
    o.eps_list = {0.5, 0.25};
    o.with_mc = false;
    o.with_pde = false;
    o.action.nodes = 100;
    o.steps = 60;
    auto rep = expansion_report(p.spec, zero_control(1), o, "zero", "lin");
    REQUIRE(rep.expansion_available);
    CHECK(rep.v0 == doctest::Approx(-2.0).epsilon(1e-6));
    CHECK(rep.v1 == doctest::Approx(0.0).scale(1.0).epsilon(2e-3));
    CHECK(!rep.v1_negative_flag); // v0 < 0 never flags
    REQUIRE(rep.rows.size() == 2);
    CHECK(rep.rows[0].expansion == doctest::Approx(-2.0).epsilon(1e-3));
    CHECK(!rep.rows[0].have_mc);
    CHECK(!rep.rows[0].have_pde);
}

TEST_CASE("full numeric pipeline: ou zero control recovers v0 and v1") {
    auto p = builtin_problem("ou_quadratic");
    ExpansionOptions o;
    o.eps_list = {0.4, 0.2};
    o.with_mc = false;
    o.with_pde = false;
    o.action.nodes = 120;
    o.steps = 80;
    auto rep = expansion_report(p.spec, zero_control(1), o, "zero", "ou");
    REQUIRE(rep.expansion_available);
    CHECK(rep.v0 == doctest::Approx(oracle::kOuV0Zero).epsilon(2e-3));
    CHECK(rep.v1 == doctest::Approx(oracle::kOuV1Zero).epsilon(2e-2));
    CHECK(!rep.v1_negative_flag);
    for (const auto& row : rep.rows) {
        CAPTURE(row.eps);
        double want = oracle::kOuV0Zero + row.eps * oracle::kOuV1Zero;
        CHECK(row.expansion == doctest::Approx(want).epsilon(1e-2));
    }
}

TEST_CASE("pipeline with pde and mc columns fills residuals") {
    auto p = builtin_problem("ou_quadratic");
    ExpansionOptions o;
    o.eps_list = {0.4, 0.2};
    o.with_mc = true;
    o.sim.n_samples = 4000;
    o.sim.dt = 5e-3;
    o.sim.seed = 31;
    o.sim.threads = 2;
    o.with_pde = true;
    o.pde_auto_grid = false;
    o.pde_grid.x_min = -4.0;
    o.pde_grid.x_max = 6.0;
    o.pde_grid.nx = 301;
    o.pde_grid.nt = 600;
    o.action.nodes = 120;
    o.steps = 80;
    auto rep = expansion_report(p.spec, zero_control(1), o, "zero", "ou");
    REQUIRE(rep.expansion_available);
    REQUIRE(rep.rows.size() == 2);
    for (const auto& row : rep.rows) {
        CAPTURE(row.eps);
        REQUIRE(row.have_pde);
        REQUIRE(row.have_mc);
        // exact rate is v0 + eps v1; PDE, MC and expansion all near it
        double want = oracle::kOuV0Zero + row.eps * oracle::kOuV1Zero;
        CHECK(row.pde_psi == doctest::Approx(want).epsilon(2e-2));
        CHECK(std::fabs(row.mc_rate - want) <= std::max(4.0 * row.mc_se, 0.02));
        CHECK(std::fabs(row.residual) < 0.02);
        CHECK(row.note.empty());
    }
}

TEST_CASE("stopped problems fall back to MC-only rows") {
    auto r = builtin_problem("rest_point_exit", {{"T", 2.0}});
    r.spec.epsilon = 0.25;
    auto control = control_from_subsolution(r.spec.model, *r.subsolution);
    ExpansionOptions o;
    o.eps_list = {0.5};
    o.with_mc = true;
    o.sim.n_samples = 2000;
    o.sim.seed = 17;
    o.with_pde = true; // silently unavailable for stopped costs
    auto rep = expansion_report(r.spec, control, o, "rev", "rest");
    CHECK(!rep.expansion_available);
    REQUIRE(rep.rows.size() == 1);
    CHECK(rep.rows[0].have_mc);
    CHECK(!rep.rows[0].have_pde);
    CHECK(std::isnan(rep.rows[0].expansion));
    CHECK(std::isnan(rep.rows[0].residual));
}

TEST_CASE("characteristic failure surfaces the partial path") {
    // A gradient provider that explodes mid-horizon: the error carries the
    // progress made so far.
    auto p = builtin_problem("linear_gaussian");
    GradientProvider grad = [](double s, const Vec&) {
        if (s > 0.5) throw SolveError("stencil failed");
        return Vec{2.0};
    };
    try {
        (void)integrate_characteristic(p.spec, zero_control(1), grad, 100);
        FAIL("expected CharacteristicError");
    } catch (const CharacteristicError& e) {
        CHECK(e.partial.states.size() > 10);
        CHECK(e.partial.times.back() <= 0.6);
        CHECK(std::string(e.what()).find("stencil failed") != std::string::npos);
    }
}

TEST_CASE("expansion options are validated") {
    auto p = builtin_problem("linear_gaussian");
    ExpansionOptions o; // empty eps list
    CHECK_THROWS_AS((void)expansion_report(p.spec, zero_control(1), o), ArgumentError);
    o.eps_list = {0.5, -0.1};
    CHECK_THROWS_AS((void)expansion_report(p.spec, zero_control(1), o), ArgumentError);
    o.eps_list = {0.5};
    o.steps = 0;
    CHECK_THROWS_AS((void)expansion_report(p.spec, zero_control(1), o), ArgumentError);
}
