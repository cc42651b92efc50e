#pragma once

// Batch statistics for importance-sampling estimators.  Payoffs Gamma_i can
// span hundreds of orders of magnitude, so batches keep log-space sums: the
// peak log-payoff M and compensated sums of exp(k (lg_i - M)) for k = 1..4.
// First and second moments, their standard errors, and the delta-method
// standard error of the per-sample relative error all come from these.
// Zero payoffs (indicator misses) carry lg = -inf and contribute only to n.

#include <cstdint>
#include <limits>
#include <span>
#include <string>

#include "isdiff/errors.hpp"

namespace isdiff {

struct BatchProvenance {
    std::string problem;
    std::string control;
    double epsilon = 0.0;
    double dt = 0.0;
    uint64_t seed = 0;

    bool compatible(const BatchProvenance& o) const {
        return problem == o.problem && control == o.control && epsilon == o.epsilon &&
               dt == o.dt && seed == o.seed;
    }
};

struct EstimatorBatch {
    uint64_t n = 0;
    uint64_t n_nonzero = 0;
    double peak = -std::numeric_limits<double>::infinity();  // max log payoff
    double s1 = 0.0, s2 = 0.0, s3 = 0.0, s4 = 0.0;  // sums of exp(k (lg - peak))
    BatchProvenance prov;

    bool degenerate() const { return n_nonzero == 0; }

    // scaled moments E[(Gamma / e^peak)^k]
    double m1s() const { return n ? s1 / static_cast<double>(n) : 0.0; }
    double m2s() const { return n ? s2 / static_cast<double>(n) : 0.0; }
    double m3s() const { return n ? s3 / static_cast<double>(n) : 0.0; }
    double m4s() const { return n ? s4 / static_cast<double>(n) : 0.0; }

    double mean() const;                 // theta_hat
    double log_mean() const;
    double second_moment() const;        // Q_hat
    double log_second_moment() const;
    double variance() const;             // per-sample, max(Q - theta^2, 0)
    double std_error_mean() const;
    double se_second_moment() const;
    double relative_error() const;       // sqrt(max(Q - theta^2, 0)) / theta
    double se_relative_error() const;    // delta method via 3rd/4th moments
    double minus_eps_log_q() const;      // -prov.epsilon * log Q_hat
    double se_minus_eps_log_q() const;
    // Jensen/Cauchy-Schwarz diagnostic: n sum(g^2) >= (sum g)^2 holds exactly
    // for genuine samples, so a violation flags a corrupted batch
    bool jensen_ok() const;
};

// Build a batch from per-sample log payoffs (may contain -inf, nothing else
// non-finite).  Two passes with compensated summation.
EstimatorBatch make_batch(std::span<const double> log_payoffs, const BatchProvenance& prov);

// Pool two batches of the same provenance.  Associative to float precision;
// merging with an empty batch returns the other operand bit-for-bit.
EstimatorBatch merge_batches(const EstimatorBatch& a, const EstimatorBatch& b);

}  // namespace isdiff
