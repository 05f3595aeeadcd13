#pragma once

#include <cstdint>
#include <optional>
#include <string_view>

#include "pifa/matrix.hpp"

namespace pifa {

// W ~ u * vt with u: m x r and vt: r x n.
struct LowRankFactors {
    DenseMatrix u;
    DenseMatrix vt;

    std::size_t rank() const noexcept { return u.cols(); }
    std::size_t rows() const noexcept { return u.rows(); }
    std::size_t cols() const noexcept { return vt.cols(); }
    DenseMatrix product() const;
    // y = u * (vt * x)
    DenseMatrix forward(const DenseMatrix& x) const;
    void validate() const;

    bool operator==(const LowRankFactors&) const = default;
};

// Rank-r truncation of the thin SVD, with singular values folded into u.
LowRankFactors truncated_svd_prune(const DenseMatrix& w, std::size_t r);

// Activation-whitened truncation: with S = chol(xxt + jitter I), truncates the
// SVD of W S and maps back through S^{-1}. Minimises ||(W - u vt) S||_F over
// rank-r products. jitter defaults to default_whitening_jitter(xxt).
LowRankFactors whitened_svd_prune(const DenseMatrix& w, const DenseMatrix& xxt, std::size_t r,
                                  std::optional<double> jitter = std::nullopt);

// 1e-8 * trace(xxt) / n.
double default_whitening_jitter(const DenseMatrix& xxt);

enum class CountingMode { svd_lowrank, pifa };

std::string_view counting_mode_name(CountingMode mode);
CountingMode parse_counting_mode(std::string_view name);

struct DensitySpec {
    double density = 1.0;  // (0, 1]
    CountingMode mode = CountingMode::pifa;
};

std::uint64_t param_count(CountingMode mode, std::uint64_t m, std::uint64_t n, std::uint64_t r);

// Largest r >= 1 whose parameter count fits in density * m * n, capped at
// min(m, n). Under PIFA counting a full budget (density = 1) maps to min(m, n).
std::size_t density_to_rank(std::size_t m, std::size_t n, const DensitySpec& spec);

}  // namespace pifa
