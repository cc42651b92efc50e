#pragma once

// Small dense linear algebra for state dimensions d ~ 1..10.  Everything is
// plain loops over row-major storage; no attempt at blocking or SIMD.

#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "isdiff/errors.hpp"

namespace isdiff {

using Vec = std::vector<double>;

struct Mat {
    int n = 0;  // square, row-major
    std::vector<double> a;

    Mat() = default;
    explicit Mat(int dim) : n(dim), a(static_cast<size_t>(dim) * dim, 0.0) {}

    static Mat identity(int dim) {
        Mat m(dim);
        for (int i = 0; i < dim; ++i) m(i, i) = 1.0;
        return m;
    }

    double& operator()(int i, int j) { return a[static_cast<size_t>(i) * n + j]; }
    double operator()(int i, int j) const { return a[static_cast<size_t>(i) * n + j]; }
};

inline double dot(const Vec& x, const Vec& y) {
    double s = 0.0;
    for (size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
    return s;
}

inline double norm2(const Vec& x) { return std::sqrt(dot(x, x)); }

inline double norm_inf(const Vec& x) {
    double m = 0.0;
    for (double v : x) m = std::max(m, std::abs(v));
    return m;
}

inline void axpy(double alpha, const Vec& x, Vec& y) {
    for (size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

inline Vec matvec(const Mat& m, const Vec& v) {
    Vec out(m.n, 0.0);
    for (int i = 0; i < m.n; ++i) {
        double s = 0.0;
        for (int j = 0; j < m.n; ++j) s += m(i, j) * v[j];
        out[i] = s;
    }
    return out;
}

inline Vec matvec_t(const Mat& m, const Vec& v) {
    Vec out(m.n, 0.0);
    for (int j = 0; j < m.n; ++j) {
        double s = 0.0;
        for (int i = 0; i < m.n; ++i) s += m(i, j) * v[i];
        out[j] = s;
    }
    return out;
}

// m * m^T, the diffusion matrix a = sigma sigma^T.
inline Mat mat_aat(const Mat& m) {
    Mat out(m.n);
    for (int i = 0; i < m.n; ++i)
        for (int j = i; j < m.n; ++j) {
            double s = 0.0;
            for (int k = 0; k < m.n; ++k) s += m(i, k) * m(j, k);
            out(i, j) = s;
            out(j, i) = s;
        }
    return out;
}

inline void symmetrize(Mat& m) {
    for (int i = 0; i < m.n; ++i)
        for (int j = i + 1; j < m.n; ++j) {
            double s = 0.5 * (m(i, j) + m(j, i));
            m(i, j) = s;
            m(j, i) = s;
        }
}

inline bool all_finite(const Vec& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

inline bool all_finite(const Mat& m) { return all_finite(m.a); }

inline std::string format_point(const Vec& x) {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < x.size(); ++i) os << (i ? ", " : "") << x[i];
    os << ")";
    return os.str();
}

// Cholesky factor L (lower), m = L L^T.  Empty result if m is not positive
// definite to working precision.
inline std::optional<Mat> cholesky(const Mat& m) {
    Mat l(m.n);
    for (int i = 0; i < m.n; ++i) {
        for (int j = 0; j <= i; ++j) {
            double s = m(i, j);
            for (int k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
            if (i == j) {
                if (!(s > 0.0) || !std::isfinite(s)) return std::nullopt;
                l(i, i) = std::sqrt(s);
            } else {
                l(i, j) = s / l(j, j);
            }
        }
    }
    return l;
}

inline Vec chol_solve(const Mat& l, const Vec& b) {
    int n = l.n;
    Vec y(n);
    for (int i = 0; i < n; ++i) {
        double s = b[i];
        for (int k = 0; k < i; ++k) s -= l(i, k) * y[k];
        y[i] = s / l(i, i);
    }
    for (int i = n - 1; i >= 0; --i) {
        double s = y[i];
        for (int k = i + 1; k < n; ++k) s -= l(k, i) * y[k];
        y[i] = s / l(i, i);
    }
    return y;
}

// r^T a^{-1} r via a prefactored Cholesky of a.
inline double inv_quadratic(const Mat& l, const Vec& r) {
    // solve L z = r, then |z|^2
    int n = l.n;
    Vec z(n);
    for (int i = 0; i < n; ++i) {
        double s = r[i];
        for (int k = 0; k < i; ++k) s -= l(i, k) * z[k];
        z[i] = s / l(i, i);
    }
    return dot(z, z);
}

// Eigenvalues of a symmetric matrix by cyclic Jacobi.  Good enough for the
// small diagnostic checks it backs.
inline Vec sym_eigenvalues(Mat m) {
    int n = m.n;
    for (int sweep = 0; sweep < 64; ++sweep) {
        double off = 0.0;
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) off += m(i, j) * m(i, j);
        if (off < 1e-28) break;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) {
                if (std::abs(m(p, q)) < 1e-300) continue;
                double theta = (m(q, q) - m(p, p)) / (2.0 * m(p, q));
                double t = (theta >= 0 ? 1.0 : -1.0) /
                           (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                double c = 1.0 / std::sqrt(t * t + 1.0);
                double s = t * c;
                for (int k = 0; k < n; ++k) {
                    double mkp = m(k, p), mkq = m(k, q);
                    m(k, p) = c * mkp - s * mkq;
                    m(k, q) = s * mkp + c * mkq;
                }
                for (int k = 0; k < n; ++k) {
                    double mpk = m(p, k), mqk = m(q, k);
                    m(p, k) = c * mpk - s * mqk;
                    m(q, k) = s * mpk + c * mqk;
                }
            }
    }
    Vec ev(n);
    for (int i = 0; i < n; ++i) ev[i] = m(i, i);
    return ev;
}

}  // namespace isdiff
