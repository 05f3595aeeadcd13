#include "pifa/decomp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace pifa {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();

void require_square(const DenseMatrix& a, const char* op) {
    if (a.rows() != a.cols()) {
        throw ShapeError(std::string(op) + ": expected a square matrix, got " + std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()));
    }
}

// Applies (I - tau v v^T) to rows [offset, offset + v.size()) and columns
// [col_begin, cols) of a.
void apply_reflector(DenseMatrix& a, std::span<const double> v, double tau, std::size_t offset,
                     std::size_t col_begin, std::vector<double>& work) {
    if (tau == 0.0) return;
    const std::size_t width = a.cols() - col_begin;
    work.assign(width, 0.0);
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double vi = v[i];
        if (vi == 0.0) continue;
        const double* row = a.data() + (offset + i) * a.cols() + col_begin;
        for (std::size_t c = 0; c < width; ++c) work[c] += vi * row[c];
    }
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double scale = tau * v[i];
        if (scale == 0.0) continue;
        double* row = a.data() + (offset + i) * a.cols() + col_begin;
        for (std::size_t c = 0; c < width; ++c) row[c] -= scale * work[c];
    }
}

}  // namespace

PivotedQr qr_column_pivoted(const DenseMatrix& a, double tol) { return qr_column_pivoted(a, QrOptions{tol, false}); }

PivotedQr qr_column_pivoted(const DenseMatrix& a, const QrOptions& options) {
    if (a.rows() == 0 || a.cols() == 0) throw ShapeError("qr_column_pivoted: empty matrix");
    if (!(options.tol >= 0.0)) throw ValidationError("qr_column_pivoted: tol must be non-negative");
    require_finite(a, "qr_column_pivoted");

    const std::size_t m = a.rows();
    const std::size_t n = a.cols();
    const std::size_t k = std::min(m, n);

    DenseMatrix work = a;
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::vector<std::vector<double>> reflectors(k);
    std::vector<double> taus(k, 0.0);
    std::vector<double> norms(n);
    std::vector<double> scratch;
    double first_pivot = 0.0;

    for (std::size_t j = 0; j < k; ++j) {
        // Exact trailing column norms; downdating is cheaper but loses accuracy
        // exactly where rank decisions are made.
        std::fill(norms.begin() + static_cast<std::ptrdiff_t>(j), norms.end(), 0.0);
        for (std::size_t i = j; i < m; ++i) {
            const double* row = work.data() + i * n;
            for (std::size_t c = j; c < n; ++c) norms[c] += row[c] * row[c];
        }
        std::size_t best = j;
        for (std::size_t c = j + 1; c < n; ++c) {
            if (norms[c] > norms[best] || (norms[c] == norms[best] && perm[c] < perm[best])) best = c;
        }
        const double best_norm = std::sqrt(norms[best]);
        if (j == 0) first_pivot = best_norm;
        if (options.stop_at_rank && j > 0 && best_norm <= options.tol * first_pivot) {
            for (std::size_t i = j; i < m; ++i)
                for (std::size_t c = j; c < n; ++c) work(i, c) = 0.0;
            break;
        }
        if (best != j) {
            for (std::size_t i = 0; i < m; ++i) std::swap(work(i, j), work(i, best));
            std::swap(perm[j], perm[best]);
            std::swap(norms[j], norms[best]);
        }

        auto& v = reflectors[j];
        v.resize(m - j);
        for (std::size_t i = j; i < m; ++i) v[i - j] = work(i, j);
        const double alpha = v[0] >= 0.0 ? -best_norm : best_norm;
        v[0] -= alpha;
        double vnorm2 = 0.0;
        for (double x : v) vnorm2 += x * x;
        if (vnorm2 == 0.0 || best_norm == 0.0) {
            taus[j] = 0.0;
            continue;
        }
        taus[j] = 2.0 / vnorm2;
        apply_reflector(work, v, taus[j], j, j + 1, scratch);
        work(j, j) = alpha;
        for (std::size_t i = j + 1; i < m; ++i) work(i, j) = 0.0;
    }

    PivotedQr out;
    out.r_factor = DenseMatrix(k, n);
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t c = i; c < n; ++c) out.r_factor(i, c) = work(i, c);

    out.q = DenseMatrix(m, k);
    for (std::size_t i = 0; i < k; ++i) out.q(i, i) = 1.0;
    for (std::size_t jj = k; jj-- > 0;) {
        if (taus[jj] == 0.0) continue;
        apply_reflector(out.q, reflectors[jj], taus[jj], jj, jj, scratch);
    }

    out.pivots = std::move(perm);
    const double r00 = std::abs(out.r_factor(0, 0));
    out.numerical_rank = 0;
    if (r00 > 0.0) {
        for (std::size_t i = 0; i < k; ++i)
            if (std::abs(out.r_factor(i, i)) > options.tol * r00) ++out.numerical_rank;
    }
    return out;
}

namespace {

// One-sided Jacobi on the rows of g (the columns of the original matrix).
// Rotations are mirrored onto vt so that a = g^T vt holds throughout.
void jacobi_sweeps(DenseMatrix& g, DenseMatrix& vt) {
    const std::size_t n = g.rows();
    const std::size_t len = g.cols();
    const double threshold = kEps * static_cast<double>(std::max<std::size_t>(len, 1));
    constexpr int kMaxSweeps = 100;

    for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
        bool rotated = false;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                double* gp = g.data() + p * len;
                double* gq = g.data() + q * len;
                double alpha = 0.0, beta = 0.0, gamma = 0.0;
                for (std::size_t i = 0; i < len; ++i) {
                    alpha += gp[i] * gp[i];
                    beta += gq[i] * gq[i];
                    gamma += gp[i] * gq[i];
                }
                if (alpha == 0.0 || beta == 0.0) continue;
                if (std::abs(gamma) <= threshold * std::sqrt(alpha * beta)) continue;
                rotated = true;
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (std::size_t i = 0; i < len; ++i) {
                    const double x = gp[i];
                    const double y = gq[i];
                    gp[i] = c * x - s * y;
                    gq[i] = s * x + c * y;
                }
                double* vp = vt.data() + p * vt.cols();
                double* vq = vt.data() + q * vt.cols();
                for (std::size_t i = 0; i < vt.cols(); ++i) {
                    const double x = vp[i];
                    const double y = vq[i];
                    vp[i] = c * x - s * y;
                    vq[i] = s * x + c * y;
                }
            }
        }
        if (!rotated) return;
    }
    throw NumericalError("thin_svd: Jacobi iteration did not converge after " + std::to_string(kMaxSweeps) +
                             " sweeps",
                         std::nullopt, kMaxSweeps);
}

// Replaces zero columns of u (flagged in missing) with unit vectors orthogonal
// to every other column.
void complete_orthonormal_columns(DenseMatrix& u, const std::vector<bool>& missing) {
    const std::size_t m = u.rows();
    const std::size_t k = u.cols();
    std::vector<double> cand(m);
    std::size_t next_basis = 0;
    for (std::size_t col = 0; col < k; ++col) {
        if (!missing[col]) continue;
        bool placed = false;
        while (!placed && next_basis < m) {
            std::fill(cand.begin(), cand.end(), 0.0);
            cand[next_basis++] = 1.0;
            for (int pass = 0; pass < 2; ++pass) {
                for (std::size_t other = 0; other < k; ++other) {
                    if (other == col || (missing[other] && other > col)) continue;
                    double dot = 0.0;
                    for (std::size_t i = 0; i < m; ++i) dot += u(i, other) * cand[i];
                    for (std::size_t i = 0; i < m; ++i) cand[i] -= dot * u(i, other);
                }
            }
            double norm = 0.0;
            for (double x : cand) norm += x * x;
            norm = std::sqrt(norm);
            if (norm > 0.5) {
                for (std::size_t i = 0; i < m; ++i) u(i, col) = cand[i] / norm;
                placed = true;
            }
        }
        if (!placed) throw NumericalError("thin_svd: could not complete an orthonormal basis");
    }
}

ThinSvd svd_tall(const DenseMatrix& a) {
    const std::size_t m = a.rows();
    const std::size_t n = a.cols();
    DenseMatrix g = transpose(a);
    DenseMatrix vt = DenseMatrix::identity(n);
    jacobi_sweeps(g, vt);

    std::vector<double> norms(n);
    for (std::size_t p = 0; p < n; ++p) {
        double s = 0.0;
        for (double x : g.row(p)) s += x * x;
        norms[p] = std::sqrt(s);
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return norms[x] > norms[y]; });

    ThinSvd out;
    out.u = DenseMatrix(m, n);
    out.vt = DenseMatrix(n, n);
    out.s.resize(n);
    std::vector<bool> missing(n, false);
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t p = order[k];
        out.s[k] = norms[p];
        if (norms[p] > 0.0) {
            for (std::size_t i = 0; i < m; ++i) out.u(i, k) = g(p, i) / norms[p];
        } else {
            missing[k] = true;
        }
        std::copy(vt.row(p).begin(), vt.row(p).end(), out.vt.row(k).begin());
    }
    if (std::find(missing.begin(), missing.end(), true) != missing.end()) complete_orthonormal_columns(out.u, missing);
    return out;
}

}  // namespace

ThinSvd thin_svd(const DenseMatrix& a) {
    if (a.rows() == 0 || a.cols() == 0) throw ShapeError("thin_svd: empty matrix");
    if (!all_finite(a)) throw NumericalError("thin_svd: non-finite entries");
    if (a.rows() >= a.cols()) return svd_tall(a);
    ThinSvd t = svd_tall(transpose(a));
    return ThinSvd{transpose(t.vt), std::move(t.s), transpose(t.u)};
}

DenseMatrix cholesky(const DenseMatrix& a, double jitter) {
    require_square(a, "cholesky");
    if (!(jitter >= 0.0)) throw ValidationError("cholesky: jitter must be non-negative");
    const std::size_t n = a.rows();
    double scale = 0.0;
    for (double v : a.values()) scale = std::max(scale, std::abs(v));
    const double sym_tol = 1e-9 * std::max(1.0, scale);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < i; ++j)
            if (std::abs(a(i, j) - a(j, i)) > sym_tol) {
                throw ValidationError("cholesky: matrix is not symmetric at (" + std::to_string(i) + ", " +
                                      std::to_string(j) + ")");
            }

    DenseMatrix l(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        const double* lj = l.data() + j * n;
        double d = a(j, j) + jitter;
        for (std::size_t k = 0; k < j; ++k) d -= lj[k] * lj[k];
        if (!(d > 0.0) || !std::isfinite(d)) {
            throw NumericalError("cholesky: matrix is not positive definite (pivot " + std::to_string(j) +
                                     " is " + std::to_string(d) + ")",
                                 std::nullopt, j);
        }
        const double ljj = std::sqrt(d);
        l(j, j) = ljj;
        for (std::size_t i = j + 1; i < n; ++i) {
            const double* li = l.data() + i * n;
            double sum = a(i, j);
            for (std::size_t k = 0; k < j; ++k) sum -= li[k] * lj[k];
            l(i, j) = sum / ljj;
        }
    }
    return l;
}

DenseMatrix solve_linear(const DenseMatrix& a, const DenseMatrix& b) {
    require_square(a, "solve_linear");
    const std::size_t n = a.rows();
    if (b.rows() != n) {
        throw ShapeError("solve_linear: right-hand side has " + std::to_string(b.rows()) + " rows, expected " +
                         std::to_string(n));
    }
    if (n == 0) return DenseMatrix(0, b.cols());

    DenseMatrix lu = a;
    DenseMatrix x = b;
    double scale = 0.0;
    for (double v : a.values()) scale = std::max(scale, std::abs(v));
    const double singular_tol = static_cast<double>(n) * kEps * scale;
    const std::size_t nrhs = b.cols();

    for (std::size_t k = 0; k < n; ++k) {
        std::size_t pivot = k;
        for (std::size_t i = k + 1; i < n; ++i)
            if (std::abs(lu(i, k)) > std::abs(lu(pivot, k))) pivot = i;
        if (!(std::abs(lu(pivot, k)) > singular_tol)) {
            throw NumericalError("solve_linear: matrix is singular to working precision (pivot " +
                                     std::to_string(k) + ")",
                                 condition_number(a), k);
        }
        if (pivot != k) {
            std::swap_ranges(lu.row(k).begin(), lu.row(k).end(), lu.row(pivot).begin());
            std::swap_ranges(x.row(k).begin(), x.row(k).end(), x.row(pivot).begin());
        }
        const double inv = 1.0 / lu(k, k);
        const double* rowk = lu.data() + k * n;
        const double* xk = x.data() + k * nrhs;
        for (std::size_t i = k + 1; i < n; ++i) {
            double* rowi = lu.data() + i * n;
            const double f = rowi[k] * inv;
            if (f == 0.0) continue;
            rowi[k] = f;
            for (std::size_t c = k + 1; c < n; ++c) rowi[c] -= f * rowk[c];
            double* xi = x.data() + i * nrhs;
            for (std::size_t c = 0; c < nrhs; ++c) xi[c] -= f * xk[c];
        }
    }
    for (std::size_t k = n; k-- > 0;) {
        double* xk = x.data() + k * nrhs;
        for (std::size_t j = k + 1; j < n; ++j) {
            const double f = lu(k, j);
            const double* xj = x.data() + j * nrhs;
            for (std::size_t c = 0; c < nrhs; ++c) xk[c] -= f * xj[c];
        }
        const double inv = 1.0 / lu(k, k);
        for (std::size_t c = 0; c < nrhs; ++c) xk[c] *= inv;
    }
    if (!all_finite(x)) throw NumericalError("solve_linear: solution overflowed", condition_number(a));
    return x;
}

DenseMatrix solve_lower(const DenseMatrix& l, const DenseMatrix& b) {
    require_square(l, "solve_lower");
    if (b.rows() != l.rows()) throw ShapeError("solve_lower: right-hand side row count mismatch");
    const std::size_t n = l.rows();
    const std::size_t nrhs = b.cols();
    DenseMatrix x = b;
    for (std::size_t i = 0; i < n; ++i) {
        double* xi = x.data() + i * nrhs;
        for (std::size_t k = 0; k < i; ++k) {
            const double f = l(i, k);
            if (f == 0.0) continue;
            const double* xk = x.data() + k * nrhs;
            for (std::size_t c = 0; c < nrhs; ++c) xi[c] -= f * xk[c];
        }
        if (l(i, i) == 0.0) throw NumericalError("solve_lower: zero diagonal", std::nullopt, i);
        const double inv = 1.0 / l(i, i);
        for (std::size_t c = 0; c < nrhs; ++c) xi[c] *= inv;
    }
    return x;
}

DenseMatrix solve_upper(const DenseMatrix& u, const DenseMatrix& b) {
    require_square(u, "solve_upper");
    if (b.rows() != u.rows()) throw ShapeError("solve_upper: right-hand side row count mismatch");
    const std::size_t n = u.rows();
    const std::size_t nrhs = b.cols();
    DenseMatrix x = b;
    for (std::size_t i = n; i-- > 0;) {
        double* xi = x.data() + i * nrhs;
        for (std::size_t k = i + 1; k < n; ++k) {
            const double f = u(i, k);
            if (f == 0.0) continue;
            const double* xk = x.data() + k * nrhs;
            for (std::size_t c = 0; c < nrhs; ++c) xi[c] -= f * xk[c];
        }
        if (u(i, i) == 0.0) throw NumericalError("solve_upper: zero diagonal", std::nullopt, i);
        const double inv = 1.0 / u(i, i);
        for (std::size_t c = 0; c < nrhs; ++c) xi[c] *= inv;
    }
    return x;
}

double condition_number(const DenseMatrix& a) {
    ThinSvd svd = thin_svd(a);
    const double smax = svd.s.front();
    const double smin = svd.s.back();
    if (smin == 0.0) return std::numeric_limits<double>::infinity();
    return smax / smin;
}

}  // namespace pifa
