#include "pifa/pifa_layer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "pifa/lowrank.hpp"
#include "pifa/pft.hpp"

namespace pifa {

namespace {

constexpr char kMagic[4] = {'P', 'I', 'F', 'L'};

std::vector<std::size_t> complement(const std::vector<std::size_t>& indices, std::size_t m) {
    std::vector<bool> taken(m, false);
    for (std::size_t i : indices) taken[i] = true;
    std::vector<std::size_t> out;
    out.reserve(m - indices.size());
    for (std::size_t i = 0; i < m; ++i)
        if (!taken[i]) out.push_back(i);
    return out;
}

}  // namespace

template <typename T>
void BasicPifaLayer<T>::validate() const {
    const std::size_t r = rank();
    if (r == 0 || r > m) throw ShapeError("pifa layer: rank " + std::to_string(r) + " outside [1, m]");
    if (w_p.rows() != r || w_p.cols() != n) throw ShapeError("pifa layer: W_p must be r x n");
    if (c.rows() != m - r || c.cols() != r) throw ShapeError("pifa layer: C must be (m - r) x r");
    if (nonpivot_indices.size() != m - r) throw ShapeError("pifa layer: non-pivot index count must be m - r");
    std::vector<bool> seen(m, false);
    for (std::size_t i : pivot_indices) {
        if (i >= m || seen[i]) throw ShapeError("pifa layer: pivot indices must be distinct and < m");
        seen[i] = true;
    }
    for (std::size_t k = 0; k < nonpivot_indices.size(); ++k) {
        const std::size_t i = nonpivot_indices[k];
        if (i >= m || seen[i]) throw ShapeError("pifa layer: non-pivot indices must complement the pivots");
        if (k > 0 && nonpivot_indices[k - 1] >= i) throw ShapeError("pifa layer: non-pivot indices must be sorted");
        seen[i] = true;
    }
}

template struct BasicPifaLayer<float>;
template struct BasicPifaLayer<double>;

PifaLayer pifa_build(const DenseMatrix& w_prime, std::size_t r, const PifaBuildOptions& options,
                     PifaBuildReport* report) {
    const std::size_t m = w_prime.rows();
    const std::size_t n = w_prime.cols();
    if (m == 0 || n == 0) throw ShapeError("pifa_build: empty matrix");
    if (r == 0 || r > m) {
        throw ShapeError("pifa_build: rank " + std::to_string(r) + " outside [1, " + std::to_string(m) + "]");
    }
    require_finite(w_prime, "pifa_build");

    // Pivot rows of W' are the pivot columns of W'^T.
    const PivotedQr qr = qr_column_pivoted(transpose(w_prime), QrOptions{options.rank_tol, true});
    if (r > qr.numerical_rank) {
        throw RankError("pifa_build: requested rank " + std::to_string(r) + " exceeds the detected numerical rank " +
                            std::to_string(qr.numerical_rank),
                        qr.numerical_rank);
    }

    PifaLayer layer;
    layer.m = m;
    layer.n = n;
    layer.pivot_indices.assign(qr.pivots.begin(), qr.pivots.begin() + static_cast<std::ptrdiff_t>(r));
    layer.nonpivot_indices = complement(layer.pivot_indices, m);
    layer.w_p = gather_rows(w_prime, layer.pivot_indices);

    const double r_first = std::abs(qr.r_factor(0, 0));
    const double r_last = std::abs(qr.r_factor(r - 1, r - 1));
    const double ratio = r_first / r_last;
    const double gram_condition = ratio * ratio;
    bool fallback = false;

    if (layer.nonpivot_indices.empty()) {
        layer.c = DenseMatrix(0, r);
    } else if (gram_condition <= options.normal_equations_max_condition) {
        // (W_p W_p^T) C^T = W_p W_np^T
        const DenseMatrix w_np = gather_rows(w_prime, layer.nonpivot_indices);
        const DenseMatrix w_p_t = transpose(layer.w_p);
        const DenseMatrix gram = matmul(layer.w_p, w_p_t);
        const DenseMatrix rhs = matmul(layer.w_p, transpose(w_np));
        layer.c = transpose(solve_linear(gram, rhs));
    } else {
        // W'^T P = Q [R11 R12]  =>  W_np^T = W_p^T R11^{-1} R12 for the trailing pivots.
        fallback = true;
        DenseMatrix r11(r, r);
        DenseMatrix r12(r, m - r);
        for (std::size_t i = 0; i < r; ++i) {
            for (std::size_t j = i; j < r; ++j) r11(i, j) = qr.r_factor(i, j);
            for (std::size_t j = r; j < m; ++j) r12(i, j - r) = qr.r_factor(i, j);
        }
        const DenseMatrix coeff = solve_upper(r11, r12);
        std::vector<std::size_t> position(m);
        for (std::size_t j = r; j < m; ++j) position[qr.pivots[j]] = j - r;
        layer.c = DenseMatrix(m - r, r);
        for (std::size_t k = 0; k < layer.nonpivot_indices.size(); ++k) {
            const std::size_t col = position[layer.nonpivot_indices[k]];
            for (std::size_t i = 0; i < r; ++i) layer.c(k, i) = coeff(i, col);
        }
    }
    require_finite(layer.c, "pifa_build");

    if (report) *report = PifaBuildReport{qr.numerical_rank, gram_condition, fallback};
    return layer;
}

PifaLayer pifa_build(const LowRankFactors& factors, const PifaBuildOptions& options, PifaBuildReport* report) {
    return pifa_build(factors.product(), factors.rank(), options, report);
}

template <typename T>
Matrix<T> pifa_forward(const BasicPifaLayer<T>& layer, const Matrix<T>& x) {
    if (x.rows() != layer.n) {
        throw ShapeError("pifa_forward: input has " + std::to_string(x.rows()) + " rows, layer expects " +
                         std::to_string(layer.n));
    }
    const Matrix<T> y_p = matmul(layer.w_p, x);
    const Matrix<T> y_np = matmul(layer.c, y_p);
    Matrix<T> y(layer.m, x.cols());
    for (std::size_t k = 0; k < layer.pivot_indices.size(); ++k) {
        std::copy(y_p.row(k).begin(), y_p.row(k).end(), y.row(layer.pivot_indices[k]).begin());
    }
    for (std::size_t k = 0; k < layer.nonpivot_indices.size(); ++k) {
        std::copy(y_np.row(k).begin(), y_np.row(k).end(), y.row(layer.nonpivot_indices[k]).begin());
    }
    return y;
}

template MatrixF pifa_forward<float>(const PifaLayerF&, const MatrixF&);
template DenseMatrix pifa_forward<double>(const PifaLayer&, const DenseMatrix&);

DenseMatrix pifa_forward_counted(const PifaLayer& layer, const DenseMatrix& x, FlopCounter& counter) {
    if (x.rows() != layer.n) throw ShapeError("pifa_forward: input row count does not match layer");
    const DenseMatrix y_p = reference::matmul_counted(layer.w_p, x, counter);
    const DenseMatrix y_np = reference::matmul_counted(layer.c, y_p, counter);
    DenseMatrix y(layer.m, x.cols());
    for (std::size_t k = 0; k < layer.pivot_indices.size(); ++k)
        std::copy(y_p.row(k).begin(), y_p.row(k).end(), y.row(layer.pivot_indices[k]).begin());
    for (std::size_t k = 0; k < layer.nonpivot_indices.size(); ++k)
        std::copy(y_np.row(k).begin(), y_np.row(k).end(), y.row(layer.nonpivot_indices[k]).begin());
    return y;
}

DenseMatrix reconstruct_dense(const PifaLayer& layer) {
    const DenseMatrix w_np = matmul(layer.c, layer.w_p);
    DenseMatrix w(layer.m, layer.n);
    for (std::size_t k = 0; k < layer.pivot_indices.size(); ++k)
        std::copy(layer.w_p.row(k).begin(), layer.w_p.row(k).end(), w.row(layer.pivot_indices[k]).begin());
    for (std::size_t k = 0; k < layer.nonpivot_indices.size(); ++k)
        std::copy(w_np.row(k).begin(), w_np.row(k).end(), w.row(layer.nonpivot_indices[k]).begin());
    return w;
}

std::uint64_t pifa_param_count(std::uint64_t m, std::uint64_t n, std::uint64_t r) {
    if (r == 0 || r > std::min(m, n)) throw ValidationError("pifa_param_count: rank outside [1, min(m, n)]");
    return r * (m + n) - r * r + r;
}

std::uint64_t lowrank_param_count(std::uint64_t m, std::uint64_t n, std::uint64_t r) {
    if (r == 0 || r > std::min(m, n)) throw ValidationError("lowrank_param_count: rank outside [1, min(m, n)]");
    return r * (m + n);
}

std::uint64_t pifl_file_bytes(std::size_t m, std::size_t n, std::size_t r, std::size_t scalar_bytes) {
    const std::uint64_t header = 4 + 1 + 3 * 8;
    return header + 8ull * r + static_cast<std::uint64_t>(scalar_bytes) * (r * n + (m - r) * r);
}

template <typename T>
void write_pifa(std::ostream& out, const BasicPifaLayer<T>& layer) {
    layer.validate();
    require_finite(layer.w_p, "write_pifa");
    require_finite(layer.c, "write_pifa");
    out.write(kMagic, 4);
    io::write_u8(out, static_cast<std::uint8_t>(dtype_of<T>()));
    io::write_u64(out, layer.m);
    io::write_u64(out, layer.n);
    io::write_u64(out, layer.rank());
    std::vector<std::uint64_t> idx(layer.pivot_indices.begin(), layer.pivot_indices.end());
    io::write_values<std::uint64_t>(out, idx);
    io::write_values<T>(out, layer.w_p.values());
    io::write_values<T>(out, layer.c.values());
}

template <typename T>
void write_pifa(const std::filesystem::path& path, const BasicPifaLayer<T>& layer) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    write_pifa(out, layer);
    out.flush();
    if (!out) throw IoError("write failed for " + path.string());
}

template void write_pifa<float>(std::ostream&, const PifaLayerF&);
template void write_pifa<double>(std::ostream&, const PifaLayer&);
template void write_pifa<float>(const std::filesystem::path&, const PifaLayerF&);
template void write_pifa<double>(const std::filesystem::path&, const PifaLayer&);

PifaLayer read_pifa(std::istream& in) {
    io::Reader reader(in);
    char magic[4];
    reader.bytes(magic, 4, "magic");
    if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError("bad magic, expected PIFL", 0);
    const std::uint8_t code = reader.u8("dtype");
    if (code != static_cast<std::uint8_t>(DType::f64)) {
        throw FormatError("unsupported PIFL dtype code " + std::to_string(code) + " (correctness paths use f64)", 4);
    }
    const std::uint64_t m = reader.u64("m");
    const std::uint64_t n = reader.u64("n");
    const std::uint64_t r = reader.u64("r");
    if (m == 0 || n == 0) throw FormatError("empty layer dimensions", 5);
    if (r == 0 || r > m) throw FormatError("rank " + std::to_string(r) + " outside [1, m = " + std::to_string(m) + "]", 21);
    if (r > n) throw FormatError("rank " + std::to_string(r) + " exceeds n = " + std::to_string(n), 21);

    if (m > (1ull << 32) || n > (1ull << 32)) throw FormatError("implausible layer dimensions", 5);
    const std::uint64_t payload = 8 * r + 8 * (r * n + (m - r) * r);
    if (auto left = io::remaining_bytes(in); left && *left < payload) {
        throw FormatError("truncated payload: " + std::to_string(payload) + " bytes declared, " +
                              std::to_string(*left) + " present",
                          reader.offset() + *left);
    }

    PifaLayer layer;
    layer.m = m;
    layer.n = n;
    std::vector<std::uint64_t> idx(r);
    const std::uint64_t idx_offset = reader.offset();
    reader.values<std::uint64_t>(idx, "pivot indices");
    std::vector<bool> seen(m, false);
    for (std::size_t k = 0; k < r; ++k) {
        if (idx[k] >= m || seen[idx[k]]) {
            throw FormatError("pivot index " + std::to_string(idx[k]) + " is out of range or repeated",
                              idx_offset + 8 * k);
        }
        seen[idx[k]] = true;
    }
    layer.pivot_indices.assign(idx.begin(), idx.end());
    layer.nonpivot_indices = complement(layer.pivot_indices, m);
    layer.w_p = DenseMatrix(r, n);
    reader.values<double>(layer.w_p.values(), "W_p payload");
    layer.c = DenseMatrix(m - r, r);
    reader.values<double>(layer.c.values(), "C payload");
    if (!all_finite(layer.w_p) || !all_finite(layer.c)) throw FormatError("non-finite payload", reader.offset());
    return layer;
}

PifaLayer read_pifa(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return read_pifa(in);
}

}  // namespace pifa
