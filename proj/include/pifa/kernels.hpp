#pragma once

#include <cstdint>

#include "pifa/matrix.hpp"

namespace pifa {

// Thread control for the OpenMP kernels. Without OpenMP these are no-ops and
// num_threads() reports 1.
void set_num_threads(int threads);
int num_threads();
// Applies PIFA_NUM_THREADS from the environment when set; returns the count in effect.
int configure_threads_from_env();

// C = A * B (or C += A * B). Rows of C are distributed across threads; every
// output element is reduced over k in ascending order, so results are
// bit-identical for any thread count.
template <typename T>
void gemm(const Matrix<T>& a, const Matrix<T>& b, Matrix<T>& c, bool accumulate = false);

template <typename T>
Matrix<T> matmul(const Matrix<T>& a, const Matrix<T>& b) {
    Matrix<T> c(a.rows(), b.cols());
    gemm(a, b, c);
    return c;
}

extern template void gemm<float>(const MatrixF&, const MatrixF&, MatrixF&, bool);
extern template void gemm<double>(const DenseMatrix&, const DenseMatrix&, DenseMatrix&, bool);

// Scalar multiply and add counts seen by an instrumented kernel.
struct FlopCounter {
    std::uint64_t multiplies = 0;
    std::uint64_t adds = 0;

    std::uint64_t flops() const { return multiplies + adds; }
};

namespace reference {

// Serial triple loop kept as the correctness baseline for gemm.
template <typename T>
Matrix<T> matmul(const Matrix<T>& a, const Matrix<T>& b) {
    if (a.cols() != b.rows()) throw ShapeError("matmul: inner dimensions differ");
    Matrix<T> c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < b.cols(); ++j) {
            T sum{0};
            for (std::size_t k = 0; k < a.cols(); ++k) sum += a(i, k) * b(k, j);
            c(i, j) = sum;
        }
    }
    return c;
}

// Same loop, charging one multiply and one add per inner step.
template <typename T>
Matrix<T> matmul_counted(const Matrix<T>& a, const Matrix<T>& b, FlopCounter& counter) {
    if (a.cols() != b.rows()) throw ShapeError("matmul: inner dimensions differ");
    Matrix<T> c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < b.cols(); ++j) {
            T sum{0};
            for (std::size_t k = 0; k < a.cols(); ++k) {
                sum += a(i, k) * b(k, j);
                ++counter.multiplies;
                ++counter.adds;
            }
            c(i, j) = sum;
        }
    }
    return c;
}

}  // namespace reference

}  // namespace pifa
