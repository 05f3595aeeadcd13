#pragma once

#include <cstddef>
#include <vector>

#include "pifa/matrix.hpp"

namespace pifa {

// A[:, pivots] = q * r_factor, with |diag(r_factor)| non-increasing.
struct PivotedQr {
    DenseMatrix q;         // m x k, orthonormal columns
    DenseMatrix r_factor;  // k x n, upper trapezoidal, columns in pivot order
    std::vector<std::size_t> pivots;  // column indices in selection order (length n)
    std::size_t numerical_rank = 0;
};

struct QrOptions {
    // Relative to |r_00|; diagonals at or below tol * |r_00| do not count toward the rank.
    double tol = 1e-10;
    // Stop eliminating once every remaining column norm is at or below the rank
    // threshold. The trailing rows of r_factor are then left at zero, so the
    // factorization is exact only up to that threshold.
    bool stop_at_rank = false;
};

// Householder QR with Businger-Golub column pivoting: each step takes the
// remaining column of largest norm, ties going to the lowest original index.
PivotedQr qr_column_pivoted(const DenseMatrix& a, double tol = 1e-10);
PivotedQr qr_column_pivoted(const DenseMatrix& a, const QrOptions& options);

struct ThinSvd {
    DenseMatrix u;          // m x k
    std::vector<double> s;  // k values, non-increasing
    DenseMatrix vt;         // k x n
};

// Full thin SVD (k = min(m, n)) by one-sided Jacobi rotations.
ThinSvd thin_svd(const DenseMatrix& a);

// Lower-triangular L with L * L^T = a + jitter * I.
DenseMatrix cholesky(const DenseMatrix& a, double jitter = 0.0);

// X with a * X = b via LU with partial pivoting.
DenseMatrix solve_linear(const DenseMatrix& a, const DenseMatrix& b);

// Triangular solves; l lower, u upper, both square and nonsingular.
DenseMatrix solve_lower(const DenseMatrix& l, const DenseMatrix& b);
DenseMatrix solve_upper(const DenseMatrix& u, const DenseMatrix& b);

// s_max / s_min; +infinity when s_min is exactly zero.
double condition_number(const DenseMatrix& a);

}  // namespace pifa
