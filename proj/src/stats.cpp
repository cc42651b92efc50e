#include "isdiff/stats.hpp"

#include <algorithm>
#include <cmath>

namespace isdiff {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct Kahan {
    double sum = 0.0, c = 0.0;
    void add(double v) {
        double y = v - c;
        double t = sum + y;
        c = (t - sum) - y;
        sum = t;
    }
};

}  // namespace

double EstimatorBatch::mean() const {
    if (degenerate()) return 0.0;
    return std::exp(peak) * m1s();
}

double EstimatorBatch::log_mean() const {
    if (degenerate()) return -kInf;
    return peak + std::log(m1s());
}

double EstimatorBatch::second_moment() const {
    if (degenerate()) return 0.0;
    return std::exp(2.0 * peak) * m2s();
}

double EstimatorBatch::log_second_moment() const {
    if (degenerate()) return -kInf;
    return 2.0 * peak + std::log(m2s());
}

double EstimatorBatch::variance() const {
    if (degenerate()) return 0.0;
    double vs = std::max(m2s() - m1s() * m1s(), 0.0);
    return std::exp(2.0 * peak) * vs;
}

double EstimatorBatch::std_error_mean() const {
    if (n == 0) return kNaN;
    if (degenerate()) return 0.0;
    double vs = std::max(m2s() - m1s() * m1s(), 0.0);
    return std::exp(peak) * std::sqrt(vs / static_cast<double>(n));
}

double EstimatorBatch::se_second_moment() const {
    if (n == 0) return kNaN;
    if (degenerate()) return 0.0;
    double vs = std::max(m4s() - m2s() * m2s(), 0.0);
    return std::exp(2.0 * peak) * std::sqrt(vs / static_cast<double>(n));
}

double EstimatorBatch::relative_error() const {
    if (degenerate()) return kNaN;
    double t = m1s(), q = m2s();
    return std::sqrt(std::max(q - t * t, 0.0)) / t;
}

double EstimatorBatch::se_relative_error() const {
    // rho(t, q) = sqrt(q - t^2) / t on scaled moments; scale invariance makes
    // the peak factor drop out.  Sample covariance of (mean, second moment):
    //   Var t_hat = (q - t^2)/n, Var q_hat = (m4 - q^2)/n,
    //   Cov = (m3 - t q)/n.
    if (n == 0 || degenerate()) return kNaN;
    double t = m1s(), q = m2s(), m3 = m3s(), m4 = m4s();
    double v = q - t * t;
    if (!(v > 0.0)) return kNaN;
    double dn = static_cast<double>(n);
    double var_t = v / dn;
    double var_q = std::max(m4 - q * q, 0.0) / dn;
    double cov = (m3 - t * q) / dn;
    double gt = -q / (std::sqrt(v) * t * t);
    double gq = 0.5 / (std::sqrt(v) * t);
    double var = gt * gt * var_t + gq * gq * var_q + 2.0 * gt * gq * cov;
    return std::sqrt(std::max(var, 0.0));
}

double EstimatorBatch::minus_eps_log_q() const {
    if (degenerate()) return kInf;
    return -prov.epsilon * log_second_moment();
}

double EstimatorBatch::se_minus_eps_log_q() const {
    if (n == 0 || degenerate()) return kNaN;
    double q = m2s();
    double vs = std::max(m4s() - q * q, 0.0);
    return prov.epsilon * std::sqrt(vs / static_cast<double>(n)) / q;
}

bool EstimatorBatch::jensen_ok() const {
    if (degenerate()) return true;
    // Cauchy-Schwarz on the sample itself: n * sum(g^2) >= (sum g)^2 holds
    // deterministically for genuine data, so a violation means corruption.
    return static_cast<double>(n) * s2 >= s1 * s1 * (1.0 - 1e-9);
}

EstimatorBatch make_batch(std::span<const double> log_payoffs, const BatchProvenance& prov) {
    EstimatorBatch b;
    b.prov = prov;
    b.n = log_payoffs.size();
    for (double lg : log_payoffs) {
        if (std::isnan(lg) || lg == kInf)
            throw ArgumentError("make_batch: log payoffs must be finite or -inf");
        if (lg != -kInf) {
            ++b.n_nonzero;
            b.peak = std::max(b.peak, lg);
        }
    }
    if (b.n_nonzero == 0) return b;
    Kahan k1, k2, k3, k4;
    for (double lg : log_payoffs) {
        if (lg == -kInf) continue;
        double d = lg - b.peak;
        k1.add(std::exp(d));
        k2.add(std::exp(2.0 * d));
        k3.add(std::exp(3.0 * d));
        k4.add(std::exp(4.0 * d));
    }
    b.s1 = k1.sum;
    b.s2 = k2.sum;
    b.s3 = k3.sum;
    b.s4 = k4.sum;
    return b;
}

EstimatorBatch merge_batches(const EstimatorBatch& a, const EstimatorBatch& b) {
    if (a.n && b.n && !a.prov.compatible(b.prov))
        throw MergeError("merge_batches: provenance mismatch (" + a.prov.problem + "/" +
                         a.prov.control + " vs " + b.prov.problem + "/" + b.prov.control + ")");
    if (a.n == 0) return b;
    if (b.n == 0) return a;
    EstimatorBatch out;
    out.prov = a.prov;
    out.n = a.n + b.n;
    out.n_nonzero = a.n_nonzero + b.n_nonzero;
    if (out.n_nonzero == 0) return out;
    out.peak = std::max(a.peak, b.peak);
    auto fold = [&](const EstimatorBatch& src, int k) {
        if (src.n_nonzero == 0) return 0.0;
        double r = std::exp(static_cast<double>(k) * (src.peak - out.peak));
        const double s[4] = {src.s1, src.s2, src.s3, src.s4};
        return s[k - 1] * r;
    };
    for (int k = 1; k <= 4; ++k) {
        double v = fold(a, k) + fold(b, k);
        (k == 1 ? out.s1 : k == 2 ? out.s2 : k == 3 ? out.s3 : out.s4) = v;
    }
    return out;
}

}  // namespace isdiff
