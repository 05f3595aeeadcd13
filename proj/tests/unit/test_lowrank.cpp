#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "pifa/decomp.hpp"
#include "pifa/kernels.hpp"
#include "pifa/lowrank.hpp"
#include "pifa/pifa_layer.hpp"

using namespace pifa;

namespace {

double whitened_objective(const DenseMatrix& w, const DenseMatrix& approx, const DenseMatrix& s) {
    return frobenius_norm(matmul(w - approx, s));
}

}  // namespace

TEST_SUITE("lowrank-prune") {

TEST_CASE("truncated svd keeps exact-rank inputs") {
    Rng rng(1);
    const DenseMatrix w = oracle::rank_r(rng, 25, 18, 6);
    const LowRankFactors f = truncated_svd_prune(w, 6);
    CHECK(f.rank() == 6);
    CHECK(relative_error(f.product(), w) <= 1e-9);
}

TEST_CASE("truncated svd drops the tail singular values") {
    const double d[] = {3, 2, 1};
    const DenseMatrix w = DenseMatrix::diagonal(std::span<const double>(d));
    CHECK(std::abs(frobenius_norm(w - truncated_svd_prune(w, 2).product()) - 1.0) <= 1e-10);
}

TEST_CASE("truncated svd matches the Eckart-Young optimum of an independent svd") {
    Rng rng(2);
    const DenseMatrix w = rng.gaussian(30, 20);
    const LowRankFactors f = truncated_svd_prune(w, 5);
    const Eigen::VectorXd s = oracle::singular_values(oracle::to_eigen(w));
    const double optimum = s.tail(s.size() - 5).norm();
    CHECK(std::abs(frobenius_norm(w - f.product()) - optimum) <= 1e-8 * optimum);
    CHECK_THROWS_AS(truncated_svd_prune(w, 0), ShapeError);
    CHECK_THROWS_AS(truncated_svd_prune(w, 21), ShapeError);
}

TEST_CASE("truncation residual is non-increasing in rank") {
    Rng rng(3);
    const DenseMatrix w = rng.gaussian(24, 16);
    double previous = frobenius_norm(w);
    for (std::size_t r = 1; r <= 16; ++r) {
        const double residual = frobenius_norm(w - truncated_svd_prune(w, r).product());
        CHECK(residual <= previous * (1 + 1e-12));
        previous = residual;
    }
}

TEST_CASE("whitening by the identity changes nothing") {
    Rng rng(4);
    const DenseMatrix w = rng.gaussian(14, 10);
    const DenseMatrix plain = truncated_svd_prune(w, 4).product();
    CHECK(relative_error(whitened_svd_prune(w, DenseMatrix::identity(10), 4, 0.0).product(), plain) <= 1e-9);
    for (double sigma : {0.1, 3.0, 40.0}) {
        const DenseMatrix xxt = (sigma * sigma) * DenseMatrix::identity(10);
        CHECK(relative_error(whitened_svd_prune(w, xxt, 4).product(), plain) <= 1e-8);
    }
}

TEST_CASE("rank-deficient gram completes with jitter") {
    Rng rng(5);
    const DenseMatrix w = rng.gaussian(12, 10);
    const DenseMatrix x = rng.gaussian(10, 4);
    const DenseMatrix xxt = matmul(x, transpose(x));
    const LowRankFactors f = whitened_svd_prune(w, xxt, 3, 1e-6);
    CHECK(all_finite(f.product()));
    CHECK(default_whitening_jitter(xxt) == doctest::Approx(1e-8 * trace(xxt) / 10));
}

TEST_CASE("whitened truncation beats random rank-r candidates") {
    Rng rng(6);
    const DenseMatrix w = rng.gaussian(12, 10);
    const DenseMatrix x = rng.gaussian(10, 200);
    const DenseMatrix xxt = matmul(x, transpose(x));
    const LowRankFactors f = whitened_svd_prune(w, xxt, 4);
    const DenseMatrix s = cholesky(xxt, default_whitening_jitter(xxt));
    const double best = whitened_objective(w, f.product(), s);
    // Perturbations of the optimum and unrelated random candidates alike.
    for (int t = 0; t < 200; ++t) {
        DenseMatrix candidate;
        if (t % 2) {
            candidate = matmul(rng.gaussian(12, 4), rng.gaussian(4, 10));
        } else {
            const double eps = 1e-3 * (1 + t);
            candidate = matmul(f.u + eps * rng.gaussian(12, 4), f.vt + eps * rng.gaussian(4, 10));
        }
        CHECK(best <= whitened_objective(w, candidate, s) * (1 + 1e-12));
    }
    // Unwhitened truncation is a rank-r candidate too.
    CHECK(best <= whitened_objective(w, truncated_svd_prune(w, 4).product(), s) * (1 + 1e-12));
}

TEST_CASE("whitened prune rejects a mismatched gram") {
    Rng rng(7);
    CHECK_THROWS_AS(whitened_svd_prune(rng.gaussian(5, 4), DenseMatrix::identity(5), 2), ShapeError);
    CHECK_THROWS_AS(whitened_svd_prune(rng.gaussian(5, 4), -1.0 * DenseMatrix::identity(4), 2, 0.0),
                    NumericalError);
}

TEST_CASE("density to rank examples") {
    for (std::size_t d : {64, 100, 1024, 4096})
        CHECK(density_to_rank(d, d, {0.5, CountingMode::svd_lowrank}) == d / 4);
    CHECK(density_to_rank(1024, 1024, {0.5, CountingMode::pifa}) == 299);
    CHECK(static_cast<std::size_t>(std::floor(1024 * (1 - std::sqrt(0.5)))) == 299);
    CHECK(pifa_param_count(1024, 1024, 299) <= 0.5 * 1024 * 1024);
    CHECK(pifa_param_count(1024, 1024, 300) > 0.5 * 1024 * 1024);
    CHECK(density_to_rank(512, 512, {1.0, CountingMode::pifa}) == 512);
    CHECK(density_to_rank(512, 512, {1.0, CountingMode::svd_lowrank}) == 256);
}

TEST_CASE("density to rank brackets the budget") {
    for (auto [m, n] : {std::pair<std::size_t, std::size_t>{64, 64}, {300, 120}, {77, 513}}) {
        for (int k = 1; k < 100; ++k) {
            const double density = k / 100.0;
            for (CountingMode mode : {CountingMode::svd_lowrank, CountingMode::pifa}) {
                const double budget = density * static_cast<double>(m * n);
                std::size_t r = 0;
                try {
                    r = density_to_rank(m, n, {density, mode});
                } catch (const ValidationError&) {
                    CHECK(static_cast<double>(param_count(mode, m, n, 1)) > budget);
                    continue;
                }
                CAPTURE(density);
                CHECK(static_cast<double>(param_count(mode, m, n, r)) <= budget);
                if (r < std::min(m, n)) CHECK(static_cast<double>(param_count(mode, m, n, r + 1)) > budget);
            }
            if (density * static_cast<double>(m * n) >= static_cast<double>(m + n)) {
                CHECK(density_to_rank(m, n, {density, CountingMode::pifa}) >=
                      density_to_rank(m, n, {density, CountingMode::svd_lowrank}));
            }
        }
    }
}

TEST_CASE("density of a rank maps back to that rank") {
    for (CountingMode mode : {CountingMode::pifa, CountingMode::svd_lowrank}) {
        for (std::size_t r = 1; r < 300; ++r) {
            const double density = static_cast<double>(param_count(mode, 300, 700, r)) / (300.0 * 700.0);
            if (density > 1.0) break;
            CHECK(density_to_rank(300, 700, {density, mode}) == r);
        }
    }
}

TEST_CASE("density validation") {
    CHECK_THROWS_AS(density_to_rank(64, 64, {0.0, CountingMode::pifa}), ValidationError);
    CHECK_THROWS_AS(density_to_rank(64, 64, {1.5, CountingMode::pifa}), ValidationError);
    CHECK_THROWS_AS(density_to_rank(64, 64, {0.01, CountingMode::pifa}), ValidationError);
    CHECK(parse_counting_mode("pifa") == CountingMode::pifa);
    CHECK(parse_counting_mode("svd") == CountingMode::svd_lowrank);
    CHECK_THROWS_AS(parse_counting_mode("dense"), ValidationError);
}

TEST_CASE("factor validation") {
    LowRankFactors bad{DenseMatrix(4, 2), DenseMatrix(3, 5)};
    CHECK_THROWS_AS(bad.validate(), ShapeError);
    Rng rng(8);
    const LowRankFactors f{rng.gaussian(6, 2), rng.gaussian(2, 5)};
    const DenseMatrix x = rng.gaussian(5, 3);
    CHECK(relative_error(f.forward(x), matmul(f.product(), x)) <= 1e-14);
}

}
