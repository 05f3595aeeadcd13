#include "pifa/kernels.hpp"

#include <algorithm>
#include <cstdlib>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace pifa {

void set_num_threads(int threads) {
#ifdef _OPENMP
    if (threads > 0) omp_set_num_threads(threads);
#else
    (void)threads;
#endif
}

int num_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

int configure_threads_from_env() {
    if (const char* env = std::getenv("PIFA_NUM_THREADS")) {
        try {
            int threads = std::stoi(env);
            if (threads > 0) set_num_threads(threads);
        } catch (const std::exception&) {
            throw ValidationError(std::string("PIFA_NUM_THREADS is not an integer: ") + env);
        }
    }
    return num_threads();
}

namespace {

constexpr std::size_t kDepthBlock = 256;
constexpr std::size_t kRowBlock = 4;
constexpr std::size_t kRowsPerTask = 16;

template <typename T>
void update_rows(const T* __restrict a, std::size_t lda, const T* __restrict b, std::size_t ldb,
                 T* __restrict c, std::size_t ldc, std::size_t rows, std::size_t k_begin, std::size_t k_end,
                 std::size_t width) {
    std::size_t i = 0;
    for (; i + kRowBlock <= rows; i += kRowBlock) {
        T* __restrict c0 = c + (i + 0) * ldc;
        T* __restrict c1 = c + (i + 1) * ldc;
        T* __restrict c2 = c + (i + 2) * ldc;
        T* __restrict c3 = c + (i + 3) * ldc;
        for (std::size_t k = k_begin; k < k_end; ++k) {
            const T a0 = a[(i + 0) * lda + k];
            const T a1 = a[(i + 1) * lda + k];
            const T a2 = a[(i + 2) * lda + k];
            const T a3 = a[(i + 3) * lda + k];
            const T* __restrict brow = b + k * ldb;
            for (std::size_t j = 0; j < width; ++j) {
                const T bv = brow[j];
                c0[j] += a0 * bv;
                c1[j] += a1 * bv;
                c2[j] += a2 * bv;
                c3[j] += a3 * bv;
            }
        }
    }
    for (; i < rows; ++i) {
        T* __restrict crow = c + i * ldc;
        for (std::size_t k = k_begin; k < k_end; ++k) {
            const T av = a[i * lda + k];
            const T* __restrict brow = b + k * ldb;
            for (std::size_t j = 0; j < width; ++j) crow[j] += av * brow[j];
        }
    }
}

}  // namespace

template <typename T>
void gemm(const Matrix<T>& a, const Matrix<T>& b, Matrix<T>& c, bool accumulate) {
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul: inner dimensions differ (" + std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()) + " times " + std::to_string(b.rows()) + "x" +
                         std::to_string(b.cols()) + ")");
    }
    if (c.rows() != a.rows() || c.cols() != b.cols()) {
        if (accumulate) throw ShapeError("matmul: accumulator has the wrong shape");
        c = Matrix<T>(a.rows(), b.cols());
    } else if (!accumulate) {
        std::fill(c.values().begin(), c.values().end(), T{0});
    }

    const std::size_t m = a.rows();
    const std::size_t depth = a.cols();
    const std::size_t width = b.cols();
    if (m == 0 || width == 0 || depth == 0) return;

    const T* pa = a.data();
    const T* pb = b.data();
    T* pc = c.data();
    const auto tasks = static_cast<std::ptrdiff_t>((m + kRowsPerTask - 1) / kRowsPerTask);

    // k-blocks outermost so each block of B stays cache-resident while every
    // row task consumes it; per element the k order is still ascending.
    for (std::size_t k0 = 0; k0 < depth; k0 += kDepthBlock) {
        const std::size_t k1 = std::min(depth, k0 + kDepthBlock);
#pragma omp parallel for schedule(static)
        for (std::ptrdiff_t task = 0; task < tasks; ++task) {
            const std::size_t row_begin = static_cast<std::size_t>(task) * kRowsPerTask;
            const std::size_t rows = std::min(kRowsPerTask, m - row_begin);
            update_rows(pa + row_begin * depth, depth, pb, width, pc + row_begin * width, width, rows, k0, k1,
                        width);
        }
    }
}

template void gemm<float>(const MatrixF&, const MatrixF&, MatrixF&, bool);
template void gemm<double>(const DenseMatrix&, const DenseMatrix&, DenseMatrix&, bool);

}  // namespace pifa
