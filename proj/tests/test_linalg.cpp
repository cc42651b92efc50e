#include "doctest.h"
#include "isdiff/linalg.hpp"

#include <cmath>

using namespace isdiff;

TEST_CASE("matrix basics") {
    Mat m = Mat::identity(3);
    CHECK(m(0, 0) == 1.0);
    CHECK(m(0, 1) == 0.0);
    m(1, 2) = 4.0;
    CHECK(m(1, 2) == 4.0);

    Vec x = {1.0, 2.0, 3.0};
    Vec y = matvec(m, x);
    CHECK(y[0] == doctest::Approx(1.0));
    CHECK(y[1] == doctest::Approx(2.0 + 12.0));
    CHECK(y[2] == doctest::Approx(3.0));
}

TEST_CASE("dot / norms / axpy") {
    Vec a = {1.0, -2.0, 2.0};
    Vec b = {3.0, 0.5, -1.0};
    CHECK(dot(a, b) == doctest::Approx(3.0 - 1.0 - 2.0));
    CHECK(norm2(a) == doctest::Approx(3.0));
    CHECK(norm_inf(a) == doctest::Approx(2.0));
    Vec c = a;
    axpy(2.0, b, c); // c = a + 2b
    CHECK(c[0] == doctest::Approx(7.0));
    CHECK(c[1] == doctest::Approx(-1.0));
    CHECK(c[2] == doctest::Approx(0.0));
}

TEST_CASE("mat_aat forms sigma sigma^T") {
    Mat s(2);
    s(0, 0) = 1.0; s(0, 1) = 2.0;
    s(1, 0) = 0.0; s(1, 1) = 3.0;
    Mat a = mat_aat(s);
    CHECK(a(0, 0) == doctest::Approx(5.0));
    CHECK(a(0, 1) == doctest::Approx(6.0));
    CHECK(a(1, 0) == doctest::Approx(6.0));
    CHECK(a(1, 1) == doctest::Approx(9.0));
}

TEST_CASE("cholesky solves SPD systems") {
    // A = L0 L0^T with a known lower factor.
    Mat a(2);
    a(0, 0) = 4.0; a(0, 1) = 2.0;
    a(1, 0) = 2.0; a(1, 1) = 5.0;
    auto l = cholesky(a);
    REQUIRE(l.has_value());
    Vec rhs = {2.0, 7.0};
    Vec x = chol_solve(*l, rhs);
    // Check A x = rhs.
    CHECK(4.0 * x[0] + 2.0 * x[1] == doctest::Approx(2.0));
    CHECK(2.0 * x[0] + 5.0 * x[1] == doctest::Approx(7.0));

    // r^T A^{-1} r through inv_quadratic.
    double q = inv_quadratic(*l, rhs);
    CHECK(q == doctest::Approx(dot(rhs, x)));
}

TEST_CASE("cholesky rejects indefinite matrices") {
    Mat a(2);
    a(0, 0) = 1.0; a(0, 1) = 2.0;
    a(1, 0) = 2.0; a(1, 1) = 1.0; // eigenvalues 3, -1
    CHECK(!cholesky(a).has_value());

    Mat z(1);
    z(0, 0) = 0.0; // singular
    CHECK(!cholesky(z).has_value());
}

TEST_CASE("jacobi eigenvalues of a known symmetric matrix") {
    // diag(1, 3) rotated by 45 degrees: [[2, 1], [1, 2]].
    Mat a(2);
    a(0, 0) = 2.0; a(0, 1) = 1.0;
    a(1, 0) = 1.0; a(1, 1) = 2.0;
    Vec ev = sym_eigenvalues(a);
    REQUIRE(ev.size() == 2);
    CHECK(ev[0] == doctest::Approx(1.0));
    CHECK(ev[1] == doctest::Approx(3.0));
}

TEST_CASE("all_finite flags NaN and infinities") {
    Vec v = {1.0, 2.0};
    CHECK(all_finite(v));
    v[1] = std::nan("");
    CHECK(!all_finite(v));
    Mat m = Mat::identity(2);
    CHECK(all_finite(m));
    m(1, 1) = std::numeric_limits<double>::infinity();
    CHECK(!all_finite(m));
}

TEST_CASE("matvec_t applies the transpose") {
    Mat s(2);
    s(0, 0) = 1.0; s(0, 1) = 2.0;
    s(1, 0) = 3.0; s(1, 1) = 4.0;
    Vec g = {1.0, 1.0};
    Vec u = matvec_t(s, g); // sigma^T g
    CHECK(u[0] == doctest::Approx(4.0));
    CHECK(u[1] == doctest::Approx(6.0));
}
