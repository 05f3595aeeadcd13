#include "pifa/reconstruct.hpp"

#include <cstdio>
#include <string>

#include "pifa/decomp.hpp"
#include "pifa/kernels.hpp"

namespace pifa {

namespace {

// Systems beyond this are treated as singular even when LU completes.
constexpr double kSingularCondition = 1e14;

std::string format_condition(double c) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3e", c);
    return buf;
}

DenseMatrix add_scaled_identity(const DenseMatrix& a, double alpha) {
    DenseMatrix out = a;
    for (std::size_t i = 0; i < out.rows(); ++i) out(i, i) += alpha;
    return out;
}

}  // namespace

void ReconstructionConfig::validate() const {
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw ValidationError("lambda must lie in [0, 1]");
    if (!(alpha >= 0.0)) throw ValidationError("alpha must be non-negative");
    if (!update_u && !update_v) throw ValidationError("reconstruction must update U, V or both");
}

CalibrationAccumulator::CalibrationAccumulator(std::size_t m, std::size_t n, double lambda)
    : xxt_(n, n), ytxt_(m, n), lambda_(lambda) {
    if (m == 0 || n == 0) throw ShapeError("CalibrationAccumulator: empty dimensions");
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw ValidationError("lambda must lie in [0, 1]");
}

void CalibrationAccumulator::accumulate(const DenseMatrix& w, const DenseMatrix& x_o, const DenseMatrix& x_u) {
    const std::size_t m = ytxt_.rows();
    const std::size_t n = xxt_.rows();
    if (w.rows() != m || w.cols() != n) throw ShapeError("accumulate: weight shape does not match accumulator");
    if (x_o.rows() != n || x_u.rows() != n) throw ShapeError("accumulate: inputs must have n rows");
    if (x_o.cols() != x_u.cols()) throw ShapeError("accumulate: dense and low-rank inputs differ in column count");
    if (x_u.cols() == 0) return;

    // lambda W x_o + (1 - lambda) W x_u = W (lambda x_o + (1 - lambda) x_u)
    DenseMatrix mixed(n, x_u.cols());
    auto mo = mixed.values();
    auto o = x_o.values();
    auto u = x_u.values();
    for (std::size_t i = 0; i < mo.size(); ++i) mo[i] = lambda_ * o[i] + (1.0 - lambda_) * u[i];

    const DenseMatrix x_u_t = transpose(x_u);
    gemm(x_u, x_u_t, xxt_, true);
    gemm(matmul(w, mixed), x_u_t, ytxt_, true);
    samples_ += x_u.cols();
}

std::size_t CalibrationAccumulator::allocated_bytes() const noexcept {
    return (xxt_.size() + ytxt_.size()) * sizeof(double);
}

DenseMatrix reconstruct_u(const CalibrationAccumulator& acc, const DenseMatrix& vt) {
    if (acc.samples() == 0) throw ValidationError("reconstruct_u: no calibration samples accumulated");
    if (vt.cols() != acc.input_dim()) throw ShapeError("reconstruct_u: vt width does not match accumulator");
    const DenseMatrix v = transpose(vt);
    const DenseMatrix inner = matmul(matmul(vt, acc.xxt()), v);
    const double cond = condition_number(inner);
    if (!(cond <= kSingularCondition)) {
        throw NumericalError("reconstruct_u: V^T X X^T V is singular (condition " + format_condition(cond) + ")",
                             cond);
    }
    // U inner = Y_t X^T V with inner symmetric, so inner U^T = (Y_t X^T V)^T.
    const DenseMatrix rhs = matmul(acc.ytxt(), v);
    DenseMatrix u_r = transpose(solve_linear(inner, transpose(rhs)));
    require_finite(u_r, "reconstruct_u");
    return u_r;
}

DenseMatrix reconstruct_v(const CalibrationAccumulator& acc, const DenseMatrix& u_r, const DenseMatrix& w,
                          double alpha) {
    if (acc.samples() == 0) throw ValidationError("reconstruct_v: no calibration samples accumulated");
    if (!(alpha >= 0.0)) throw ValidationError("reconstruct_v: alpha must be non-negative");
    if (u_r.rows() != acc.output_dim()) throw ShapeError("reconstruct_v: U height does not match accumulator");
    if (w.rows() != acc.output_dim() || w.cols() != acc.input_dim()) {
        throw ShapeError("reconstruct_v: weight shape does not match accumulator");
    }

    const DenseMatrix u_t = transpose(u_r);
    const DenseMatrix utu = matmul(u_t, u_r);
    const double cond_utu = condition_number(utu);
    if (!(cond_utu <= kSingularCondition)) {
        throw NumericalError("reconstruct_v: U^T U is singular (condition " + format_condition(cond_utu) + ")",
                             cond_utu);
    }
    DenseMatrix target = acc.ytxt();
    if (alpha > 0.0) target = target + alpha * w;
    const DenseMatrix gram = add_scaled_identity(acc.xxt(), alpha);
    const double cond_gram = condition_number(gram);
    if (!(cond_gram <= kSingularCondition)) {
        std::string message = "reconstruct_v: X X^T";
        message += alpha > 0.0 ? " + alpha I" : "";
        message += " is singular (condition " + format_condition(cond_gram) + ")";
        if (alpha == 0.0) message += "; use alpha > 0 to regularise";
        throw NumericalError(message, cond_gram);
    }
    // Z = (U^T U)^{-1} U^T target, then V^T gram = Z with gram symmetric.
    const DenseMatrix z = solve_linear(utu, matmul(u_t, target));
    DenseMatrix vt = transpose(solve_linear(gram, transpose(z)));
    require_finite(vt, "reconstruct_v");
    return vt;
}

ReconstructionReport condition_report(const CalibrationAccumulator& acc, const DenseMatrix& vt, double alpha) {
    if (vt.cols() != acc.input_dim()) throw ShapeError("condition_report: vt width does not match accumulator");
    ReconstructionReport report;
    report.samples = acc.samples();
    report.cond_vxxv = condition_number(matmul(matmul(vt, acc.xxt()), transpose(vt)));
    report.cond_xxt = condition_number(acc.xxt());
    report.cond_xxt_alpha = alpha > 0.0 ? condition_number(add_scaled_identity(acc.xxt(), alpha)) : report.cond_xxt;
    return report;
}

ReconstructionResult reconstruct_pair(const CalibrationAccumulator& acc, const LowRankFactors& factors,
                                      const DenseMatrix& w, const ReconstructionConfig& cfg) {
    cfg.validate();
    factors.validate();
    if (factors.rows() != acc.output_dim() || factors.cols() != acc.input_dim()) {
        throw ShapeError("reconstruct_pair: factor shapes do not match accumulator");
    }
    ReconstructionResult result{factors, condition_report(acc, factors.vt, cfg.alpha)};
    if (cfg.update_u) result.factors.u = reconstruct_u(acc, factors.vt);
    if (cfg.update_v) result.factors.vt = reconstruct_v(acc, result.factors.u, w, cfg.alpha);
    return result;
}

}  // namespace pifa
