#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "oracles.hpp"
#include "pifa/decomp.hpp"
#include "pifa/kernels.hpp"

using namespace pifa;

namespace {

double orthonormality_defect(const DenseMatrix& q) {
    const DenseMatrix qtq = matmul(transpose(q), q);
    return frobenius_norm(qtq - DenseMatrix::identity(qtq.rows()));
}

DenseMatrix permute_columns(const DenseMatrix& a, const std::vector<std::size_t>& pivots) {
    DenseMatrix out(a.rows(), pivots.size());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < pivots.size(); ++j) out(i, j) = a(i, pivots[j]);
    return out;
}

}  // namespace

TEST_SUITE("decomp") {

TEST_CASE("qr of the identity") {
    const PivotedQr qr = qr_column_pivoted(DenseMatrix::identity(3));
    std::vector<std::size_t> sorted = qr.pivots;
    std::sort(sorted.begin(), sorted.end());
    CHECK(sorted == std::vector<std::size_t>{0, 1, 2});
    // All norms tie, so the lowest index wins each step.
    CHECK(qr.pivots == std::vector<std::size_t>{0, 1, 2});
    CHECK(qr.numerical_rank == 3);
}

TEST_CASE("qr detects rank of proportional rows") {
    const PivotedQr qr = qr_column_pivoted(DenseMatrix{{1, 2}, {2, 4}}, 1e-10);
    CHECK(qr.numerical_rank == 1);
    CHECK(qr.pivots.front() == 1);
}

TEST_CASE("qr detects constructed rank") {
    Rng rng(40);
    const DenseMatrix a = oracle::rank_r(rng, 40, 40, 8);
    CHECK(qr_column_pivoted(a, 1e-10).numerical_rank == 8);
}

TEST_CASE("qr invariants on random shapes") {
    Rng rng(41);
    for (int t = 0; t < 25; ++t) {
        const std::size_t m = 1 + rng.index(40), n = 1 + rng.index(40);
        const DenseMatrix a = rng.gaussian(m, n);
        const PivotedQr qr = qr_column_pivoted(a);
        CAPTURE(m);
        CAPTURE(n);
        CHECK(orthonormality_defect(qr.q) <= 1e-10);
        CHECK(relative_error(matmul(qr.q, qr.r_factor), permute_columns(a, qr.pivots)) <= 1e-10);
        for (std::size_t i = 1; i < std::min(qr.r_factor.rows(), qr.r_factor.cols()); ++i)
            CHECK(std::abs(qr.r_factor(i, i)) <= std::abs(qr.r_factor(i - 1, i - 1)) * (1 + 1e-12));
        for (std::size_t i = 0; i < qr.r_factor.rows(); ++i)
            for (std::size_t j = 0; j < std::min(i, qr.r_factor.cols()); ++j) CHECK(qr.r_factor(i, j) == 0.0);
        std::vector<std::size_t> sorted = qr.pivots;
        std::sort(sorted.begin(), sorted.end());
        std::vector<std::size_t> expected(n);
        std::iota(expected.begin(), expected.end(), 0);
        CHECK(sorted == expected);
    }
}

TEST_CASE("qr residual after r pivots vanishes for exact rank") {
    Rng rng(42);
    for (std::size_t r : {1, 3, 7, 12}) {
        const DenseMatrix a = oracle::rank_r(rng, 30, 25, r);
        const PivotedQr qr = qr_column_pivoted(a);
        // Project a onto the span of its first r pivot columns.
        const DenseMatrix cols = permute_columns(a, {qr.pivots.begin(), qr.pivots.begin() + static_cast<long>(r)});
        const oracle::Mat c = oracle::to_eigen(cols);
        const oracle::Mat e = oracle::to_eigen(a);
        const oracle::Mat residual = e - c * oracle::lstsq(c, e);
        CHECK(residual.norm() <= 1e-9 * e.norm());
    }
}

TEST_CASE("qr stop_at_rank halts early") {
    Rng rng(43);
    const DenseMatrix a = oracle::rank_r(rng, 20, 30, 5);
    QrOptions opt;
    opt.stop_at_rank = true;
    const PivotedQr qr = qr_column_pivoted(a, opt);
    CHECK(qr.numerical_rank == 5);
    CHECK(relative_error(matmul(qr.q, qr.r_factor), permute_columns(a, qr.pivots)) <= 1e-10);
}

TEST_CASE("qr rejects empty input") {
    CHECK_THROWS_AS(qr_column_pivoted(DenseMatrix(0, 3)), ShapeError);
    CHECK_THROWS_AS(qr_column_pivoted(DenseMatrix::identity(2), -1.0), ValidationError);
}

TEST_CASE("svd of a diagonal") {
    const double d[] = {3, 2, 1};
    const ThinSvd svd = thin_svd(DenseMatrix::diagonal(std::span<const double>(d)));
    REQUIRE(svd.s.size() == 3);
    CHECK(svd.s[0] == doctest::Approx(3).epsilon(1e-14));
    CHECK(svd.s[1] == doctest::Approx(2).epsilon(1e-14));
    CHECK(svd.s[2] == doctest::Approx(1).epsilon(1e-14));
}

TEST_CASE("singular values match an independent symmetric eigensolver") {
    Rng rng(50);
    for (auto [m, n] : {std::pair{12, 7}, {7, 12}, {20, 20}, {1, 5}, {5, 1}}) {
        const DenseMatrix a = rng.gaussian(m, n);
        const ThinSvd svd = thin_svd(a);
        const oracle::Mat e = oracle::to_eigen(a);
        const oracle::Mat gram = m >= n ? oracle::Mat(e.transpose() * e) : oracle::Mat(e * e.transpose());
        Eigen::SelfAdjointEigenSolver<oracle::Mat> eig(gram);
        Eigen::VectorXd ev = eig.eigenvalues().reverse();
        for (Eigen::Index i = 0; i < ev.size(); ++i) {
            const double expected = std::sqrt(std::max(0.0, ev(i)));
            CHECK(std::abs(svd.s[static_cast<std::size_t>(i)] - expected) <= 1e-8 * expected);
        }
    }
}

TEST_CASE("svd of a rank-1 outer product") {
    Rng rng(51);
    const DenseMatrix u = rng.gaussian(9, 1), v = rng.gaussian(1, 6);
    const ThinSvd svd = thin_svd(matmul(u, v));
    CHECK(svd.s[0] == doctest::Approx(frobenius_norm(u) * frobenius_norm(v)).epsilon(1e-12));
    for (std::size_t i = 1; i < svd.s.size(); ++i) CHECK(svd.s[i] <= 1e-10 * svd.s[0]);
}

TEST_CASE("svd invariants") {
    Rng rng(52);
    for (int t = 0; t < 20; ++t) {
        const std::size_t m = 1 + rng.index(35), n = 1 + rng.index(35);
        const std::size_t r = 1 + rng.index(std::min(m, n));
        // Mix of full and deficient rank, including exact zeros.
        const DenseMatrix a = t % 2 ? rng.gaussian(m, n) : oracle::rank_r(rng, m, n, r);
        const ThinSvd svd = thin_svd(a);
        const std::size_t k = std::min(m, n);
        REQUIRE(svd.u.cols() == k);
        REQUIRE(svd.vt.rows() == k);
        CHECK(std::is_sorted(svd.s.rbegin(), svd.s.rend()));
        CHECK(orthonormality_defect(svd.u) <= 1e-10);
        CHECK(orthonormality_defect(transpose(svd.vt)) <= 1e-10);
        const DenseMatrix rebuilt = matmul(matmul(svd.u, DenseMatrix::diagonal(std::span<const double>(svd.s))), svd.vt);
        CHECK(frobenius_norm(a - rebuilt) <= 1e-9 * frobenius_norm(a));
    }
    const ThinSvd zero = thin_svd(DenseMatrix(4, 3));
    CHECK(orthonormality_defect(zero.u) <= 1e-12);
    CHECK(zero.s == std::vector<double>{0, 0, 0});
}

TEST_CASE("svd rejects non-finite input") {
    DenseMatrix a = DenseMatrix::identity(2);
    a(0, 0) = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(thin_svd(a), NumericalError);
}

TEST_CASE("cholesky examples") {
    CHECK(cholesky(DenseMatrix::identity(3)) == DenseMatrix::identity(3));
    const DenseMatrix l = cholesky(DenseMatrix{{4, 2}, {2, 3}});
    CHECK(l(0, 0) == doctest::Approx(2));
    CHECK(l(0, 1) == 0.0);
    CHECK(l(1, 0) == doctest::Approx(1));
    CHECK(l(1, 1) == doctest::Approx(std::sqrt(2.0)));

    Rng rng(60);
    const DenseMatrix g = rng.gaussian(15, 9);
    DenseMatrix a = matmul(g, transpose(g));
    const DenseMatrix chol = cholesky(a, 1e-6);
    for (std::size_t i = 0; i < a.rows(); ++i) a(i, i) += 1e-6;
    CHECK(relative_error(matmul(chol, transpose(chol)), a) <= 1e-9);
}

TEST_CASE("cholesky failures") {
    try {
        cholesky(DenseMatrix{{1, 0, 0}, {0, 1, 0}, {0, 0, -1}});
        FAIL("indefinite matrix accepted");
    } catch (const NumericalError& e) {
        REQUIRE(e.index().has_value());
        CHECK(*e.index() == 2);
    }
    CHECK_THROWS_AS(cholesky(DenseMatrix{{1, 2}, {0, 1}}), ValidationError);
    CHECK_THROWS_AS(cholesky(DenseMatrix::identity(2), -1.0), ValidationError);
    CHECK_THROWS_AS(cholesky(DenseMatrix(2, 3)), ShapeError);
}

TEST_CASE("solve_linear examples and residuals") {
    Rng rng(70);
    const DenseMatrix b = rng.gaussian(4, 3);
    CHECK(solve_linear(DenseMatrix::identity(4), b) == b);
    CHECK(relative_error(solve_linear(DenseMatrix{{2, 0}, {0, 4}}, DenseMatrix{{2}, {8}}), DenseMatrix{{1}, {2}}) <=
          1e-15);
    const DenseMatrix a = rng.gaussian(20, 20) + 5.0 * DenseMatrix::identity(20);
    const DenseMatrix rhs = rng.gaussian(20, 4);
    const DenseMatrix x = solve_linear(a, rhs);
    CHECK(frobenius_norm(matmul(a, x) - rhs) <= 1e-10 * frobenius_norm(rhs));
}

TEST_CASE("solve_linear backward stability up to condition 1e8") {
    Rng rng(71);
    for (double cond : {1e2, 1e5, 1e8}) {
        const std::size_t n = 25;
        const DenseMatrix q1 = qr_column_pivoted(rng.gaussian(n, n), 0.0).q;
        const DenseMatrix q2 = qr_column_pivoted(rng.gaussian(n, n), 0.0).q;
        std::vector<double> s(n);
        for (std::size_t i = 0; i < n; ++i) s[i] = std::pow(cond, -static_cast<double>(i) / (n - 1));
        const DenseMatrix a = matmul(matmul(q1, DenseMatrix::diagonal(std::span<const double>(s))), transpose(q2));
        const DenseMatrix rhs = rng.gaussian(n, 2);
        CHECK(frobenius_norm(matmul(a, solve_linear(a, rhs)) - rhs) <= 1e-8 * frobenius_norm(rhs));
    }
}

TEST_CASE("solve_linear reports singular systems") {
    try {
        solve_linear(DenseMatrix{{1, 2}, {2, 4}}, DenseMatrix{{1}, {1}});
        FAIL("singular system solved");
    } catch (const NumericalError& e) {
        CHECK(e.condition().has_value());
    }
    CHECK_THROWS_AS(solve_linear(DenseMatrix(2, 3), DenseMatrix(2, 1)), ShapeError);
    CHECK_THROWS_AS(solve_linear(DenseMatrix::identity(2), DenseMatrix(3, 1)), ShapeError);
}

TEST_CASE("triangular solves") {
    Rng rng(72);
    DenseMatrix l = rng.gaussian(6, 6);
    for (std::size_t i = 0; i < 6; ++i) {
        l(i, i) = 3.0 + std::abs(l(i, i));
        for (std::size_t j = i + 1; j < 6; ++j) l(i, j) = 0.0;
    }
    const DenseMatrix b = rng.gaussian(6, 3);
    CHECK(relative_error(matmul(l, solve_lower(l, b)), b) <= 1e-13);
    const DenseMatrix u = transpose(l);
    CHECK(relative_error(matmul(u, solve_upper(u, b)), b) <= 1e-13);
}

TEST_CASE("condition numbers") {
    CHECK(condition_number(DenseMatrix::identity(4)) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(condition_number(DenseMatrix{{10, 0}, {0, 1}}) == doctest::Approx(10.0).epsilon(1e-14));
    Rng rng(80);
    const DenseMatrix q = qr_column_pivoted(rng.gaussian(12, 12), 0.0).q;
    CHECK(std::abs(condition_number(q) - 1.0) <= 1e-8);
    CHECK(std::isinf(condition_number(DenseMatrix{{1, 0}, {0, 0}})));
}

}
