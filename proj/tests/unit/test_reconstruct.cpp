#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "pifa/decomp.hpp"
#include "pifa/kernels.hpp"
#include "pifa/reconstruct.hpp"

using namespace pifa;

namespace {

// ||Y_t - U Vt X_u||_F with Y_t = lambda W X_o + (1 - lambda) W X_u.
double objective(const DenseMatrix& w, const DenseMatrix& x_o, const DenseMatrix& x_u, double lambda,
                 const DenseMatrix& u, const DenseMatrix& vt) {
    const DenseMatrix target = lambda * matmul(w, x_o) + (1.0 - lambda) * matmul(w, x_u);
    return frobenius_norm(target - matmul(u, matmul(vt, x_u)));
}

}  // namespace

TEST_SUITE("reconstruct") {

TEST_CASE("lambda endpoints") {
    Rng rng(1);
    const DenseMatrix w = rng.gaussian(5, 4), x_o = rng.gaussian(4, 7), x_u = rng.gaussian(4, 7);
    CalibrationAccumulator zero(5, 4, 0.0);
    zero.accumulate(w, x_o, x_u);
    CHECK(relative_error(zero.ytxt(), matmul(matmul(w, x_u), transpose(x_u))) <= 1e-14);
    CHECK(relative_error(zero.xxt(), matmul(x_u, transpose(x_u))) <= 1e-14);

    CalibrationAccumulator one(5, 4, 1.0), other(5, 4, 0.0);
    one.accumulate(w, x_u, x_u);
    other.accumulate(w, x_u, x_u);
    CHECK(one.ytxt() == other.ytxt());
    CHECK(one.xxt() == other.xxt());

    CalibrationAccumulator dense(5, 4, 1.0);
    dense.accumulate(w, x_o, x_u);
    CHECK(relative_error(dense.ytxt(), matmul(matmul(w, x_o), transpose(x_u))) <= 1e-14);
}

TEST_CASE("single-column updates equal one batch update") {
    Rng rng(2);
    const DenseMatrix w = rng.gaussian(6, 8), x_o = rng.gaussian(8, 128), x_u = rng.gaussian(8, 128);
    CalibrationAccumulator batch(6, 8, 0.25), online(6, 8, 0.25);
    batch.accumulate(w, x_o, x_u);
    for (std::size_t j = 0; j < 128; ++j) {
        online.accumulate(w, column_block(x_o, j, 1), column_block(x_u, j, 1));
        const DenseMatrix& g = online.xxt();
        CHECK(relative_error(g, transpose(g)) <= 1e-9);
    }
    CHECK(online.samples() == 128);
    CHECK(relative_error(online.xxt(), batch.xxt()) <= 1e-9);
    CHECK(relative_error(online.ytxt(), batch.ytxt()) <= 1e-9);
}

TEST_CASE("accumulator storage does not grow with samples") {
    Rng rng(3);
    const DenseMatrix w = rng.gaussian(10, 12);
    CalibrationAccumulator acc(10, 12, 0.25);
    const std::size_t bytes = acc.allocated_bytes();
    CHECK(bytes == (12 * 12 + 10 * 12) * sizeof(double));
    const DenseMatrix x = rng.gaussian(12, 512);
    acc.accumulate(w, x, x);
    CHECK(acc.allocated_bytes() == bytes);
}

TEST_CASE("accumulator shape errors") {
    CalibrationAccumulator acc(3, 4, 0.5);
    CHECK_THROWS_AS(acc.accumulate(DenseMatrix(3, 5), DenseMatrix(5, 1), DenseMatrix(5, 1)), ShapeError);
    CHECK_THROWS_AS(acc.accumulate(DenseMatrix(3, 4), DenseMatrix(4, 2), DenseMatrix(4, 1)), ShapeError);
    CHECK_THROWS_AS(acc.accumulate(DenseMatrix(3, 4), DenseMatrix(3, 1), DenseMatrix(3, 1)), ShapeError);
    CHECK_THROWS_AS(CalibrationAccumulator(3, 4, 1.5), ValidationError);
}

TEST_CASE("reconstruct_u fixed point") {
    Rng rng(4);
    const DenseMatrix u = rng.gaussian(7, 3), vt = rng.gaussian(3, 5);
    const DenseMatrix w = matmul(u, vt);
    CalibrationAccumulator acc(7, 5, 0.0);
    const DenseMatrix x = rng.gaussian(5, 40);
    acc.accumulate(w, x, x);
    CHECK(relative_error(reconstruct_u(acc, vt), u) <= 1e-8);
}

TEST_CASE("reconstruct_u matches a stacked least-squares oracle") {
    Rng rng(5);
    const DenseMatrix w = rng.gaussian(3, 3), vt = rng.gaussian(1, 3);
    const DenseMatrix x_o = rng.gaussian(3, 50), x_u = rng.gaussian(3, 50);
    CalibrationAccumulator acc(3, 3, 0.25);
    acc.accumulate(w, x_o, x_u);
    const DenseMatrix u_r = reconstruct_u(acc, vt);

    // min_U ||Y_t - U (Vt X_u)||: stack samples, solve (Vt X_u)^T U^T = Y_t^T.
    const oracle::Mat target = 0.25 * oracle::to_eigen(w) * oracle::to_eigen(x_o) +
                               0.75 * oracle::to_eigen(w) * oracle::to_eigen(x_u);
    const oracle::Mat z = oracle::to_eigen(vt) * oracle::to_eigen(x_u);
    const oracle::Mat expected = oracle::lstsq(z.transpose(), target.transpose()).transpose();
    CHECK(oracle::rel(oracle::to_eigen(u_r), expected) <= 1e-8);

    const double base = objective(w, x_o, x_u, 0.25, u_r, vt);
    for (int t = 0; t < 10; ++t)
        CHECK(objective(w, x_o, x_u, 0.25, u_r + 1e-3 * rng.gaussian(3, 1), vt) > base);

    // Normal-equation residual.
    const DenseMatrix v = transpose(vt);
    const DenseMatrix lhs = matmul(acc.ytxt(), v);
    const DenseMatrix rhs = matmul(u_r, matmul(matmul(vt, acc.xxt()), v));
    CHECK(relative_error(rhs, lhs) <= 1e-8);
}

TEST_CASE("reconstruct_v fixed point") {
    Rng rng(6);
    const DenseMatrix u = qr_column_pivoted(rng.gaussian(8, 3), 0.0).q;
    const DenseMatrix vt = rng.gaussian(3, 6);
    const DenseMatrix w = matmul(u, vt);
    CalibrationAccumulator acc(8, 6, 0.0);
    const DenseMatrix x = rng.gaussian(6, 30);
    acc.accumulate(w, x, x);
    CHECK(relative_error(reconstruct_v(acc, u, w, 0.0), vt) <= 1e-8);
}

TEST_CASE("closed form equals the two-step construction") {
    Rng rng(7);
    for (int t = 0; t < 10; ++t) {
        const DenseMatrix w = rng.gaussian(8, 6), u = rng.gaussian(8, 3);
        const DenseMatrix x_o = rng.gaussian(6, 20), x_u = rng.gaussian(6, 20);
        CalibrationAccumulator acc(8, 6, 0.25);
        acc.accumulate(w, x_o, x_u);
        for (double alpha : {0.0, 0.001, 0.5}) {
            const DenseMatrix vt = reconstruct_v(acc, u, w, alpha);
            // W* = (Y_t X^T + alpha W)(X X^T + alpha I)^{-1}, then project onto U.
            const oracle::Mat a = oracle::to_eigen(acc.xxt()) + alpha * oracle::Mat::Identity(6, 6);
            const oracle::Mat b = oracle::to_eigen(acc.ytxt()) + alpha * oracle::to_eigen(w);
            const oracle::Mat w_star = a.transpose().partialPivLu().solve(b.transpose()).transpose();
            const oracle::Mat ue = oracle::to_eigen(u);
            const oracle::Mat two_step = (ue.transpose() * ue).ldlt().solve(ue.transpose() * w_star);
            CHECK(oracle::rel(oracle::to_eigen(vt), two_step) <= 1e-9);
        }
    }
}

TEST_CASE("reconstruct_v matches a stacked least-squares oracle") {
    Rng rng(8);
    const DenseMatrix w = rng.gaussian(4, 3), u = rng.gaussian(4, 2);
    const DenseMatrix x = rng.gaussian(3, 25);
    CalibrationAccumulator acc(4, 3, 0.0);
    acc.accumulate(w, x, x);
    const DenseMatrix vt = reconstruct_v(acc, u, w, 0.0);
    // vec(U Vt X) = (X^T kron U) vec(Vt); column-major vec.
    const oracle::Mat xe = oracle::to_eigen(x), ue = oracle::to_eigen(u);
    oracle::Mat kron(xe.cols() * ue.rows(), ue.cols() * xe.rows());
    for (Eigen::Index i = 0; i < xe.cols(); ++i)
        for (Eigen::Index j = 0; j < xe.rows(); ++j) kron.block(i * ue.rows(), j * ue.cols(), ue.rows(), ue.cols()) = xe(j, i) * ue;
    const Eigen::MatrixXd y = oracle::to_eigen(w) * xe;
    const Eigen::VectorXd sol = kron.colPivHouseholderQr().solve(Eigen::Map<const Eigen::VectorXd>(y.data(), y.size()));
    const Eigen::MatrixXd expected = Eigen::Map<const Eigen::MatrixXd>(sol.data(), 2, 3);
    CHECK(oracle::rel(oracle::to_eigen(vt), oracle::Mat(expected)) <= 1e-8);
}

TEST_CASE("singular gram needs regularisation") {
    Rng rng(9);
    const DenseMatrix w = rng.gaussian(6, 8), u = rng.gaussian(6, 2);
    const DenseMatrix x = rng.gaussian(8, 4);
    CalibrationAccumulator acc(6, 8, 0.0);
    acc.accumulate(w, x, x);
    CHECK(all_finite(reconstruct_v(acc, u, w, 0.001)));
    try {
        reconstruct_v(acc, u, w, 0.0);
        FAIL("singular system solved");
    } catch (const NumericalError& e) {
        CHECK(std::string(e.what()).find("alpha") != std::string::npos);
        CHECK(e.condition().has_value());
    }
    CHECK_THROWS_AS(reconstruct_u(CalibrationAccumulator(6, 8, 0.0), rng.gaussian(2, 8)), ValidationError);
    CHECK_THROWS_AS(reconstruct_u(acc, rng.gaussian(6, 8)), NumericalError);
}

TEST_CASE("reconstruct_pair flags and ordering") {
    Rng rng(10);
    const DenseMatrix w = rng.gaussian(9, 7);
    const DenseMatrix x_o = rng.gaussian(7, 60), x_u = rng.gaussian(7, 60);
    CalibrationAccumulator acc(9, 7, 0.25);
    acc.accumulate(w, x_o, x_u);
    const LowRankFactors start = truncated_svd_prune(w, 3);

    ReconstructionConfig only_u;
    only_u.update_v = false;
    const ReconstructionResult ru = reconstruct_pair(acc, start, w, only_u);
    CHECK(ru.factors.vt == start.vt);
    CHECK(ru.factors.u == reconstruct_u(acc, start.vt));

    ReconstructionConfig only_v;
    only_v.update_u = false;
    const ReconstructionResult rv = reconstruct_pair(acc, start, w, only_v);
    CHECK(rv.factors.u == start.u);

    const ReconstructionResult both = reconstruct_pair(acc, start, w, ReconstructionConfig{});
    CHECK(both.factors.vt == reconstruct_v(acc, ru.factors.u, w, 0.001));
    CHECK(both.report.samples == 60);
    CHECK(both.report.cond_xxt >= both.report.cond_xxt_alpha);

    ReconstructionConfig none;
    none.update_u = none.update_v = false;
    CHECK_THROWS_AS(reconstruct_pair(acc, start, w, none), ValidationError);
}

TEST_CASE("reconstruction does not increase the objective") {
    Rng rng(11);
    for (int t = 0; t < 20; ++t) {
        const DenseMatrix w = rng.gaussian(10, 8);
        const DenseMatrix x_o = rng.gaussian(8, 80);
        const DenseMatrix x_u = x_o + 0.2 * rng.gaussian(8, 80);
        CalibrationAccumulator acc(10, 8, 0.25);
        acc.accumulate(w, x_o, x_u);
        const LowRankFactors start = truncated_svd_prune(w, 1 + rng.index(6));
        ReconstructionConfig cfg;
        cfg.alpha = 0.0;
        const ReconstructionResult r = reconstruct_pair(acc, start, w, cfg);
        CHECK(objective(w, x_o, x_u, 0.25, r.factors.u, r.factors.vt) <=
              objective(w, x_o, x_u, 0.25, start.u, start.vt) * (1 + 1e-12));
    }
}

TEST_CASE("config validation") {
    ReconstructionConfig cfg;
    CHECK(cfg.lambda == 0.25);
    CHECK(cfg.alpha == 0.001);
    cfg.lambda = 1.5;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    cfg.lambda = 0.5;
    cfg.alpha = -1;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
}

}
