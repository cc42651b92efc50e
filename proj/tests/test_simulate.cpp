#include "doctest.h"
#include "isdiff/catalog.hpp"
#include "isdiff/errors.hpp"
#include "isdiff/simulate.hpp"
#include "oracles.hpp"

#include <cmath>

using namespace isdiff;

namespace {

SimulationConfig cfg(uint64_t n, double dt = 1e-3, uint64_t seed = 2024, int threads = 2) {
    SimulationConfig c;
    c.n_samples = n;
    c.dt = dt;
    c.seed = seed;
    c.threads = threads;
    return c;
}

} // namespace

TEST_CASE("num_steps and config validation") {
    auto p = builtin_problem("linear_gaussian");
    CHECK(num_steps(p.spec, 0.1) == 10);
    CHECK(num_steps(p.spec, 0.3) == 4);   // last step shorter
    CHECK(num_steps(p.spec, 1.0) == 1);

    auto c = cfg(10);
    c.dt = 0.0;
    CHECK_THROWS_AS(validate_config(p.spec, c), ArgumentError);
    c = cfg(10);
    c.dt = 2.0; // larger than the horizon
    CHECK_THROWS_AS(validate_config(p.spec, c), ArgumentError);
    c = cfg(0);
    CHECK_THROWS_AS(validate_config(p.spec, c), ArgumentError);
    c = cfg(10);
    c.threads = 0;
    CHECK_THROWS_AS(validate_config(p.spec, c), ArgumentError);

    auto r = builtin_problem("rest_point_exit");
    c = cfg(10);
    c.stop_at_exit = false; // stopped problems must stop
    CHECK_THROWS_AS(validate_config(r.spec, c), ArgumentError);

    auto bad = p.spec;
    bad.T = -1.0;
    CHECK_THROWS_AS(validate_config(bad, cfg(10)), ArgumentError);
    bad = p.spec;
    bad.epsilon = 0.0;
    CHECK_THROWS_AS(validate_config(bad, cfg(10)), ArgumentError);
}

TEST_CASE("optimal control for linear_gaussian is exactly zero-variance") {
    // With u = -kappa s the Gaussian terms cancel path by path, in discrete
    // time as well, so every sample equals theta exactly.
    auto p = builtin_problem("linear_gaussian");
    p.spec.epsilon = 0.5;
    auto control = constant_control({-1.0});
    auto b = run_estimator(p.spec, control, cfg(2000, 1e-2), "opt", "lin");
    double theta = p.ref.theta(0.5);
    CHECK(b.mean() == doctest::Approx(theta).epsilon(1e-12));
    CHECK(b.relative_error() < 1e-12);
    CHECK(b.minus_eps_log_q() == doctest::Approx(-1.0).epsilon(1e-10));
}

TEST_CASE("zero-control estimator is unbiased (linear_gaussian)") {
    // Constant coefficients make Euler exact in law: only MC error remains.
    auto p = builtin_problem("linear_gaussian");
    p.spec.epsilon = 0.5;
    auto b = run_estimator(p.spec, zero_control(1), cfg(40000, 1e-2), "zero", "lin");
    double theta = p.ref.theta(0.5);
    CHECK(std::fabs(b.mean() - theta) <= 3.5 * b.std_error_mean());
    CHECK(b.jensen_ok());
}

TEST_CASE("constant-control estimator is unbiased and matches Q closed form") {
    // eps = 2 keeps the lognormal weights light-tailed enough that the sample
    // SE of the second moment is trustworthy at this n
    auto p = builtin_problem("linear_gaussian");
    p.spec.epsilon = 2.0;
    auto b = run_estimator(p.spec, constant_control({0.3}), cfg(60000, 1e-2), "c03", "lin");
    double theta = p.ref.theta(2.0);
    CHECK(std::fabs(b.mean() - theta) <= 3.5 * b.std_error_mean());
    double q = oracle::lg_Q_const(0.0, 1.0, 1.0, 1.0, 0.0, 0.3, 2.0);
    CHECK(std::fabs(b.second_moment() - q) <= 3.5 * b.se_second_moment());
}

TEST_CASE("ou_quadratic subsolution control is unbiased") {
    auto p = builtin_problem("ou_quadratic");
    p.spec.epsilon = 0.25;
    auto control = control_from_subsolution(p.spec.model, *p.subsolution);
    auto b = run_estimator(p.spec, control, cfg(30000), "sub", "ou");
    double theta = p.ref.theta(0.25);
    CHECK(std::fabs(b.mean() - theta) <= 3.5 * b.std_error_mean());
    // the subsolution control beats zero control on relative error
    auto z = run_estimator(p.spec, zero_control(1), cfg(30000), "zero", "ou");
    CHECK(std::fabs(z.mean() - theta) <= 3.5 * z.std_error_mean());
    CHECK(b.relative_error() < z.relative_error());
}

TEST_CASE("dual second-moment estimators agree") {
    auto p = builtin_problem("linear_gaussian");
    p.spec.epsilon = 0.5;
    auto control = constant_control({0.3});
    auto is = run_estimator(p.spec, control, cfg(40000, 1e-2), "c", "lin");
    auto dm = second_moment_direct(p.spec, control, cfg(40000, 1e-2), "c", "lin");
    double se = std::sqrt(is.se_second_moment() * is.se_second_moment() +
                          dm.std_error_mean() * dm.std_error_mean());
    CHECK(std::fabs(is.second_moment() - dm.mean()) <= 3.5 * se);
    // and both near the closed form
    double q = oracle::lg_Q_const(0.0, 1.0, 1.0, 1.0, 0.0, 0.3, 0.5);
    CHECK(std::fabs(dm.mean() - q) <= 3.5 * dm.std_error_mean());
}

TEST_CASE("results are invariant under the thread count") {
    auto p = builtin_problem("ou_quadratic");
    auto control = control_from_subsolution(p.spec.model, *p.subsolution);
    auto a = run_estimator(p.spec, control, cfg(5000, 1e-2, 9, 1), "s", "ou");
    auto b = run_estimator(p.spec, control, cfg(5000, 1e-2, 9, 3), "s", "ou");
    auto c = run_estimator(p.spec, control, cfg(5000, 1e-2, 9, 4), "s", "ou");
    CHECK(a.peak == b.peak);
    CHECK(a.s1 == b.s1); // bitwise
    CHECK(a.s2 == b.s2);
    CHECK(a.s3 == c.s3);
    CHECK(a.s4 == c.s4);
    CHECK(a.mean() == c.mean());
}

TEST_CASE("seed changes the answer, same seed repeats it") {
    auto p = builtin_problem("linear_gaussian");
    auto z = zero_control(1);
    auto a = run_estimator(p.spec, z, cfg(500, 1e-2, 1), "z", "lin");
    auto b = run_estimator(p.spec, z, cfg(500, 1e-2, 1), "z", "lin");
    auto c = run_estimator(p.spec, z, cfg(500, 1e-2, 2), "z", "lin");
    CHECK(a.s1 == b.s1);
    CHECK(a.s1 != c.s1);
}

TEST_CASE("empty horizon collapses to the deterministic payoff") {
    auto p = builtin_problem("linear_gaussian", {{"x0", 0.7}});
    p.spec.T = p.spec.t0; // zero-length horizon
    p.spec.epsilon = 0.5;
    auto b = run_estimator(p.spec, zero_control(1), cfg(50, 1e-3), "z", "lin");
    CHECK(b.mean() == doctest::Approx(std::exp(-0.7 / 0.5)).epsilon(1e-13));
    CHECK(b.relative_error() < 1e-14);
}

TEST_CASE("stopped problem produces sensible exit estimates") {
    auto r = builtin_problem("rest_point_exit", {{"T", 2.0}});
    r.spec.epsilon = 0.25;
    auto control = control_from_subsolution(r.spec.model, *r.subsolution);
    auto b = run_estimator(r.spec, control, cfg(4000), "rev", "rest");
    CHECK(!b.degenerate());
    CHECK(b.mean() > 0.0);
    CHECK(b.mean() < 1.0);
    // exit probability at eps = 0.25 sits near e^{-2L/eps}; the IS estimate
    // must live on that scale (log within a factor ~2 of the rate)
    CHECK(b.log_mean() < -4.0);
    CHECK(b.log_mean() > -16.0);
    CHECK(b.jensen_ok());

    // with a longer horizon the probability increases
    auto r5 = builtin_problem("rest_point_exit", {{"T", 4.0}});
    r5.spec.epsilon = 0.25;
    auto c5 = control_from_subsolution(r5.spec.model, *r5.subsolution);
    auto b5 = run_estimator(r5.spec, c5, cfg(4000), "rev", "rest");
    CHECK(b5.mean() > b.mean());
}

TEST_CASE("stopped paths record exit data") {
    auto r = builtin_problem("rest_point_exit", {{"T", 3.0}});
    r.spec.epsilon = 0.25;
    auto control = control_from_subsolution(r.spec.model, *r.subsolution);
    SimulationConfig c = cfg(1, 1e-3);
    NormalStream noise(11, 0, 0);
    auto path = simulate_is_path(r.spec, control, c, noise);
    // under the reversed-potential push the path exits well before T
    REQUIRE(path.exit_time.has_value());
    CHECK(path.exit_class == Region::ExitTarget);
    CHECK(*path.exit_time > 0.0);
    CHECK(*path.exit_time <= 3.0);
    CHECK(path.terminal_state[0] * path.terminal_state[0] >= 2.0 * 0.999);
}

TEST_CASE("reversed path carries the control-energy weight") {
    auto p = builtin_problem("linear_gaussian");
    p.spec.epsilon = 0.5;
    auto control = constant_control({0.4});
    SimulationConfig c = cfg(1, 1e-2);
    NormalStream noise(3, 1, 0);
    auto path = simulate_reversed_path(p.spec, control, c, noise);
    // (1/eps) int |u|^2 dt = 0.16 / 0.5
    CHECK(path.log_weight == doctest::Approx(0.32).epsilon(1e-12));
}

TEST_CASE("epsilon sweep runs row streams independently") {
    auto p = builtin_problem("linear_gaussian");
    auto z = zero_control(1);
    auto table = epsilon_sweep(p.spec, z, cfg(800, 1e-2, 5), {0.5, 0.25}, "z", "lin");
    REQUIRE(table.rows.size() == 2);
    CHECK(table.rows[0].ok);
    CHECK(table.rows[1].ok);
    CHECK(table.rows[0].eps == 0.5);
    CHECK(table.rows[1].eps == 0.25);

    // row r reproduces a standalone run on stream kStreamSweepBase + 2r
    auto spec = p.spec;
    spec.epsilon = 0.25;
    auto lone = run_estimator(spec, z, cfg(800, 1e-2, 5), "z", "lin",
                              kStreamSweepBase + 2);
    CHECK(table.rows[1].batch.s1 == lone.s1);
    CHECK(table.rows[1].batch.peak == lone.peak);

    // provenance rows carry their own epsilon
    CHECK(table.rows[0].batch.prov.epsilon == 0.5);
    CHECK(table.rows[1].batch.prov.epsilon == 0.25);
}

TEST_CASE("blow-up paths are reported with context") {
    // dX = X^3 dt with a huge positive control blows up quickly
    DiffusionModel m;
    m.dim = 1;
    m.drift = [](const Vec& x) { return Vec{x[0] * x[0] * x[0]}; };
    m.diffusion = [](const Vec&) { return Mat::identity(1); };
    TerminalCost cost;
    cost.kind = TerminalCost::Kind::Smooth;
    cost.h = [](const Vec& x) { return x[0]; };
    ProblemSpec spec;
    spec.model = m;
    spec.cost = cost;
    spec.x0 = {3.0};
    spec.T = 1.0;
    spec.epsilon = 0.25;
    CHECK_THROWS_AS((void)run_estimator(spec, zero_control(1), cfg(10, 1e-2), "z", "cubic"),
                    EvalError);
}
