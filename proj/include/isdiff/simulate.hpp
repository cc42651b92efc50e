#pragma once

// Euler-Maruyama simulation and importance-sampling estimators.
//
// Under the sampling measure the path follows drift b + sigma u and carries
// the Girsanov log-weight
//
//   log dP/dPbar = sum_k [ -|u_k|^2 dt_k / (2 eps) - sqrt(dt_k / eps) <u_k, xi_k> ],
//
// so Gamma = exp(-h(X_T)/eps) dP/dPbar (smooth costs) or
// Gamma = 1{exit through target} dP/dPbar (stopped indicator costs) is an
// unbiased estimator of theta for any control.
//
// The direct second-moment estimator simulates under the original measure
// with the control's sign flipped (drift b - sigma u) and averages
// exp(-2 h(Xbar_T)/eps + (1/eps) int |u|^2 dt); both routes estimate
// Q = E[Gamma^2].
//
// Determinism: sample i draws from NormalStream(seed, stream, i), workers
// write per-sample log payoffs into an index-ordered buffer, and one ordered
// compensated reduction builds the batch — results are invariant under the
// thread count, bit for bit.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "isdiff/model.hpp"
#include "isdiff/rng.hpp"
#include "isdiff/stats.hpp"

namespace isdiff {

// reserved stream ids: 0 = IS estimator, 1 = direct second moment;
// epsilon sweep row r uses 2 + 2r and 3 + 2r.
inline constexpr uint64_t kStreamEstimator = 0;
inline constexpr uint64_t kStreamDirect = 1;
inline constexpr uint64_t kStreamSweepBase = 2;

struct SimulationConfig {
    double dt = 1e-3;
    uint64_t n_samples = 10000;
    uint64_t seed = 0;
    int threads = 1;
    bool stop_at_exit = true;  // must stay true for stopped indicator costs
};

struct PathSample {
    Vec terminal_state;
    double log_weight = 0.0;  // see the producing function for semantics
    std::optional<double> exit_time;
    Region exit_class = Region::Inside;
    int steps = 0;
};

// number of Euler steps for the horizon (last step may be shorter)
int num_steps(const ProblemSpec& spec, double dt);

void validate_config(const ProblemSpec& spec, const SimulationConfig& cfg);

// One path under the sampling measure; log_weight = log dP/dPbar.
PathSample simulate_is_path(const ProblemSpec& spec, const ControlPolicy& control,
                            const SimulationConfig& cfg, NormalStream& noise);

// One path under the original measure with reversed control drift b - sigma u;
// log_weight = (1/eps) int |u|^2 dt (up to the stopping time).
PathSample simulate_reversed_path(const ProblemSpec& spec, const ControlPolicy& control,
                                  const SimulationConfig& cfg, NormalStream& noise);

// IS estimator of theta (and of Q via the batch's second moment).
EstimatorBatch run_estimator(const ProblemSpec& spec, const ControlPolicy& control,
                             const SimulationConfig& cfg,
                             const std::string& control_label = "control",
                             const std::string& problem_label = "problem",
                             uint64_t stream = kStreamEstimator);

// Direct estimator of the second moment Q.
EstimatorBatch second_moment_direct(const ProblemSpec& spec, const ControlPolicy& control,
                                    const SimulationConfig& cfg,
                                    const std::string& control_label = "control",
                                    const std::string& problem_label = "problem",
                                    uint64_t stream = kStreamDirect);

struct SweepRow {
    double eps = 0.0;
    bool ok = false;
    EstimatorBatch batch;   // valid when ok
    std::string error;      // set when !ok
};

struct SweepTable {
    std::vector<SweepRow> rows;
};

// Runs the IS estimator across epsilons (fresh streams per row).  Row-level
// failures are recorded, not thrown; a row records its own error message.
SweepTable epsilon_sweep(const ProblemSpec& spec, const ControlPolicy& control,
                         const SimulationConfig& cfg, const std::vector<double>& eps_list,
                         const std::string& control_label = "control",
                         const std::string& problem_label = "problem");

}  // namespace isdiff
