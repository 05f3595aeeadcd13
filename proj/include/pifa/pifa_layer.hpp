#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "pifa/decomp.hpp"
#include "pifa/kernels.hpp"
#include "pifa/matrix.hpp"

namespace pifa {

struct LowRankFactors;

// Lossless compact form of a rank-r, m x n matrix W': the r pivot rows W'[I, :]
// are stored verbatim and every other row is C times them.
template <typename T>
struct BasicPifaLayer {
    std::size_t m = 0;
    std::size_t n = 0;
    std::vector<std::size_t> pivot_indices;     // I, in selection order
    std::vector<std::size_t> nonpivot_indices;  // sorted complement of I
    Matrix<T> w_p;                              // r x n
    Matrix<T> c;                                // (m - r) x r

    std::size_t rank() const noexcept { return pivot_indices.size(); }

    // Stored scalars plus one slot per pivot index.
    std::size_t stored_entries() const noexcept { return w_p.size() + c.size() + pivot_indices.size(); }

    // Checks the index-set and shape invariants; throws ShapeError on violation.
    void validate() const;

    template <typename U>
    BasicPifaLayer<U> cast() const {
        return BasicPifaLayer<U>{m, n, pivot_indices, nonpivot_indices, matrix_cast<U>(w_p), matrix_cast<U>(c)};
    }

    bool operator==(const BasicPifaLayer&) const = default;
};

using PifaLayer = BasicPifaLayer<double>;
using PifaLayerF = BasicPifaLayer<float>;

struct PifaBuildOptions {
    double rank_tol = 1e-10;
    // Above this condition estimate of W_p W_p^T the coefficient matrix is taken
    // from the triangular QR factors instead of the normal equations.
    double normal_equations_max_condition = 1e12;
};

// Diagnostics of a build; see pifa_build_report.
struct PifaBuildReport {
    std::size_t detected_rank = 0;
    double gram_condition_estimate = 0.0;
    bool used_qr_fallback = false;
};

PifaLayer pifa_build(const DenseMatrix& w_prime, std::size_t r, const PifaBuildOptions& options = {},
                     PifaBuildReport* report = nullptr);
// Forms W' = U * Vt first.
PifaLayer pifa_build(const LowRankFactors& factors, const PifaBuildOptions& options = {},
                     PifaBuildReport* report = nullptr);

// Y_p = W_p X, Y_np = C Y_p, scattered into rows I and I^c of Y.
template <typename T>
Matrix<T> pifa_forward(const BasicPifaLayer<T>& layer, const Matrix<T>& x);

extern template MatrixF pifa_forward<float>(const PifaLayerF&, const MatrixF&);
extern template DenseMatrix pifa_forward<double>(const PifaLayer&, const DenseMatrix&);

// The same schedule on the serial reference kernel with operation counting.
DenseMatrix pifa_forward_counted(const PifaLayer& layer, const DenseMatrix& x, FlopCounter& counter);

DenseMatrix reconstruct_dense(const PifaLayer& layer);

// r(m+n) - r^2 + r, charging each pivot index as one parameter.
std::uint64_t pifa_param_count(std::uint64_t m, std::uint64_t n, std::uint64_t r);
// r(m+n).
std::uint64_t lowrank_param_count(std::uint64_t m, std::uint64_t n, std::uint64_t r);

// PIFL file: "PIFL" | dtype u8 | m u64 | n u64 | r u64 | r x u64 pivots | W_p | C (row-major, little-endian)
template <typename T>
void write_pifa(std::ostream& out, const BasicPifaLayer<T>& layer);
template <typename T>
void write_pifa(const std::filesystem::path& path, const BasicPifaLayer<T>& layer);
PifaLayer read_pifa(std::istream& in);
PifaLayer read_pifa(const std::filesystem::path& path);

std::uint64_t pifl_file_bytes(std::size_t m, std::size_t n, std::size_t r, std::size_t scalar_bytes);

}  // namespace pifa
