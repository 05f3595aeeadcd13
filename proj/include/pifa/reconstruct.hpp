#pragma once

#include <cstddef>

#include "pifa/lowrank.hpp"
#include "pifa/matrix.hpp"

namespace pifa {

struct ReconstructionConfig {
    double lambda = 0.25;  // mix ratio of the dense-flow target
    double alpha = 0.001;  // V regularisation
    bool update_u = true;
    bool update_v = true;

    void validate() const;
};

// Running sums for online least squares over calibration columns:
//   xxt  += X_u X_u^T
//   ytxt += (lambda W X_o + (1 - lambda) W X_u) X_u^T
// Storage is fixed at construction (n x n and m x n) no matter how many
// samples are folded in.
class CalibrationAccumulator {
public:
    CalibrationAccumulator(std::size_t m, std::size_t n, double lambda);

    // x_o: dense-flow inputs, x_u: low-rank-flow inputs; both n x b.
    void accumulate(const DenseMatrix& w, const DenseMatrix& x_o, const DenseMatrix& x_u);

    const DenseMatrix& xxt() const noexcept { return xxt_; }
    const DenseMatrix& ytxt() const noexcept { return ytxt_; }
    std::size_t samples() const noexcept { return samples_; }
    double lambda() const noexcept { return lambda_; }
    std::size_t output_dim() const noexcept { return ytxt_.rows(); }
    std::size_t input_dim() const noexcept { return xxt_.rows(); }

    // Bytes held by the running sums.
    std::size_t allocated_bytes() const noexcept;

private:
    DenseMatrix xxt_;
    DenseMatrix ytxt_;
    std::size_t samples_ = 0;
    double lambda_;
};

// U_r = (Y_t X^T) V (V^T X X^T V)^{-1}
DenseMatrix reconstruct_u(const CalibrationAccumulator& acc, const DenseMatrix& vt);

// V_r^T = (U^T U)^{-1} U^T (Y_t X^T + alpha W) (X X^T + alpha I)^{-1}; alpha = 0
// gives the unregularised closed form.
DenseMatrix reconstruct_v(const CalibrationAccumulator& acc, const DenseMatrix& u_r, const DenseMatrix& w,
                          double alpha);

// Condition numbers of the systems behind a reconstruction.
struct ReconstructionReport {
    double cond_vxxv = 0.0;       // V^T (X X^T) V
    double cond_xxt = 0.0;        // X X^T
    double cond_xxt_alpha = 0.0;  // X X^T + alpha I
    std::size_t samples = 0;
};

ReconstructionReport condition_report(const CalibrationAccumulator& acc, const DenseMatrix& vt, double alpha);

struct ReconstructionResult {
    LowRankFactors factors;
    ReconstructionReport report;
};

// U first (when selected), then V against the updated U, both from the same sums.
ReconstructionResult reconstruct_pair(const CalibrationAccumulator& acc, const LowRankFactors& factors,
                                      const DenseMatrix& w, const ReconstructionConfig& cfg);

}  // namespace pifa
