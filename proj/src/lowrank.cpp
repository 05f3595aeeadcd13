#include "pifa/lowrank.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "pifa/decomp.hpp"
#include "pifa/kernels.hpp"
#include "pifa/pifa_layer.hpp"

namespace pifa {

DenseMatrix LowRankFactors::product() const { return matmul(u, vt); }

DenseMatrix LowRankFactors::forward(const DenseMatrix& x) const { return matmul(u, matmul(vt, x)); }

void LowRankFactors::validate() const {
    if (u.cols() != vt.rows()) throw ShapeError("low-rank factors: inner dimensions differ");
    if (u.cols() == 0 || u.cols() > std::min(u.rows(), vt.cols())) {
        throw ShapeError("low-rank factors: rank outside [1, min(m, n)]");
    }
}

namespace {

void check_rank(const DenseMatrix& w, std::size_t r, const char* op) {
    if (r == 0 || r > std::min(w.rows(), w.cols())) {
        throw ShapeError(std::string(op) + ": rank " + std::to_string(r) + " outside [1, " +
                         std::to_string(std::min(w.rows(), w.cols())) + "]");
    }
}

// u = B_r E_r, vt = A_r^T from a thin SVD.
LowRankFactors truncate(const ThinSvd& svd, std::size_t r) {
    const std::size_t m = svd.u.rows();
    const std::size_t n = svd.vt.cols();
    LowRankFactors f{DenseMatrix(m, r), DenseMatrix(r, n)};
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t k = 0; k < r; ++k) f.u(i, k) = svd.u(i, k) * svd.s[k];
    for (std::size_t k = 0; k < r; ++k) std::copy(svd.vt.row(k).begin(), svd.vt.row(k).end(), f.vt.row(k).begin());
    return f;
}

}  // namespace

LowRankFactors truncated_svd_prune(const DenseMatrix& w, std::size_t r) {
    check_rank(w, r, "truncated_svd_prune");
    return truncate(thin_svd(w), r);
}

double default_whitening_jitter(const DenseMatrix& xxt) {
    if (xxt.rows() == 0) return 0.0;
    return 1e-8 * std::max(0.0, trace(xxt)) / static_cast<double>(xxt.rows());
}

LowRankFactors whitened_svd_prune(const DenseMatrix& w, const DenseMatrix& xxt, std::size_t r,
                                  std::optional<double> jitter) {
    check_rank(w, r, "whitened_svd_prune");
    if (xxt.rows() != w.cols() || xxt.cols() != w.cols()) {
        throw ShapeError("whitened_svd_prune: Gram matrix must be " + std::to_string(w.cols()) + "x" +
                         std::to_string(w.cols()));
    }
    const DenseMatrix s = cholesky(xxt, jitter.value_or(default_whitening_jitter(xxt)));
    LowRankFactors f = truncate(thin_svd(matmul(w, s)), r);
    // vt S = A_r^T  <=>  S^T vt^T = A_r
    f.vt = transpose(solve_upper(transpose(s), transpose(f.vt)));
    require_finite(f.vt, "whitened_svd_prune");
    return f;
}

std::string_view counting_mode_name(CountingMode mode) {
    return mode == CountingMode::pifa ? "pifa" : "svd_lowrank";
}

CountingMode parse_counting_mode(std::string_view name) {
    if (name == "pifa") return CountingMode::pifa;
    if (name == "svd_lowrank" || name == "svd" || name == "lowrank") return CountingMode::svd_lowrank;
    throw ValidationError("unknown counting mode '" + std::string(name) + "'");
}

std::uint64_t param_count(CountingMode mode, std::uint64_t m, std::uint64_t n, std::uint64_t r) {
    return mode == CountingMode::pifa ? pifa_param_count(m, n, r) : lowrank_param_count(m, n, r);
}

std::size_t density_to_rank(std::size_t m, std::size_t n, const DensitySpec& spec) {
    if (m == 0 || n == 0) throw ShapeError("density_to_rank: empty shape");
    if (!(spec.density > 0.0 && spec.density <= 1.0)) {
        throw ValidationError("density " + std::to_string(spec.density) + " outside (0, 1]");
    }
    const std::size_t r_max = std::min(m, n);
    // A full budget is full rank under PIFA accounting even though the r index
    // slots push the count to m n + r - (m - r)(n - r) > m n.
    if (spec.density == 1.0 && spec.mode == CountingMode::pifa) return r_max;

    const double budget = spec.density * static_cast<double>(m) * static_cast<double>(n);
    const double sum = static_cast<double>(m + n);
    double estimate = 0.0;
    if (spec.mode == CountingMode::svd_lowrank) {
        estimate = budget / sum;
    } else {
        // r^2 - (m + n + 1) r + budget <= 0, smaller root.
        const double b = sum + 1.0;
        const double disc = std::max(0.0, b * b - 4.0 * budget);
        estimate = 0.5 * (b - std::sqrt(disc));
    }
    // Settle the floor with exact integer counts; the closed form only seeds it.
    // The slack absorbs rounding in density * m * n, so a density computed as
    // count / (m n) maps back to the same rank.
    const double limit = budget * (1.0 + 1e-12);
    auto fits = [&](std::size_t r) {
        return static_cast<double>(param_count(spec.mode, m, n, r)) <= limit;
    };
    std::size_t r = static_cast<std::size_t>(std::clamp(std::floor(estimate), 0.0, static_cast<double>(r_max)));
    while (r > 0 && !fits(r)) --r;
    while (r < r_max && fits(r + 1)) ++r;
    if (r == 0) {
        throw ValidationError("density " + std::to_string(spec.density) + " is infeasible for a " +
                              std::to_string(m) + "x" + std::to_string(n) + " layer (rank would be 0)");
    }
    return r;
}

}  // namespace pifa
