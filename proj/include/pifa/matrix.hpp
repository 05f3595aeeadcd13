#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "pifa/error.hpp"

namespace pifa {

// Row-major dense matrix. Value type; copies are deep.
template <typename T>
class Matrix {
public:
    using value_type = T;

    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, T{0}) {}
    Matrix(std::size_t rows, std::size_t cols, std::vector<T> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (data_.size() != rows_ * cols_) {
            throw ShapeError("matrix data length " + std::to_string(data_.size()) + " does not match " +
                             std::to_string(rows_) + "x" + std::to_string(cols_));
        }
    }
    Matrix(std::initializer_list<std::initializer_list<T>> rows) : rows_(rows.size()) {
        cols_ = rows_ == 0 ? 0 : rows.begin()->size();
        data_.reserve(rows_ * cols_);
        for (const auto& row : rows) {
            if (row.size() != cols_) throw ShapeError("ragged matrix literal");
            data_.insert(data_.end(), row.begin(), row.end());
        }
    }

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = T{1};
        return m;
    }

    static Matrix diagonal(std::span<const T> values) {
        Matrix m(values.size(), values.size());
        for (std::size_t i = 0; i < values.size(); ++i) m(i, i) = values[i];
        return m;
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    T& operator()(std::size_t i, std::size_t j) noexcept { return data_[i * cols_ + j]; }
    const T& operator()(std::size_t i, std::size_t j) const noexcept { return data_[i * cols_ + j]; }

    std::span<T> row(std::size_t i) noexcept { return {data_.data() + i * cols_, cols_}; }
    std::span<const T> row(std::size_t i) const noexcept { return {data_.data() + i * cols_, cols_}; }

    std::span<T> values() noexcept { return data_; }
    std::span<const T> values() const noexcept { return data_; }
    T* data() noexcept { return data_.data(); }
    const T* data() const noexcept { return data_.data(); }

    bool operator==(const Matrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<T> data_;
};

using DenseMatrix = Matrix<double>;
using MatrixF = Matrix<float>;

template <typename To, typename From>
Matrix<To> matrix_cast(const Matrix<From>& m) {
    std::vector<To> out(m.size());
    auto in = m.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<To>(in[i]);
    return Matrix<To>(m.rows(), m.cols(), std::move(out));
}

template <typename T>
Matrix<T> transpose(const Matrix<T>& a) {
    Matrix<T> t(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
    return t;
}

template <typename T>
double frobenius_norm(const Matrix<T>& a) {
    // Scaled accumulation avoids overflow for large entries.
    double scale = 0.0;
    double ssq = 1.0;
    for (T v : a.values()) {
        double x = std::abs(static_cast<double>(v));
        if (x == 0.0) continue;
        if (scale < x) {
            ssq = 1.0 + ssq * (scale / x) * (scale / x);
            scale = x;
        } else {
            ssq += (x / scale) * (x / scale);
        }
    }
    return scale * std::sqrt(ssq);
}

template <typename T>
void require_same_shape(const Matrix<T>& a, const Matrix<T>& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                         std::to_string(b.cols()));
    }
}

template <typename T>
Matrix<T> operator+(const Matrix<T>& a, const Matrix<T>& b) {
    require_same_shape(a, b, "add");
    Matrix<T> out = a;
    auto o = out.values();
    auto v = b.values();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] += v[i];
    return out;
}

template <typename T>
Matrix<T> operator-(const Matrix<T>& a, const Matrix<T>& b) {
    require_same_shape(a, b, "subtract");
    Matrix<T> out = a;
    auto o = out.values();
    auto v = b.values();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] -= v[i];
    return out;
}

template <typename T>
Matrix<T> operator*(T s, const Matrix<T>& a) {
    Matrix<T> out = a;
    for (T& v : out.values()) v *= s;
    return out;
}

template <typename T>
double relative_error(const Matrix<T>& approx, const Matrix<T>& reference) {
    double denom = frobenius_norm(reference);
    double num = frobenius_norm(approx - reference);
    return denom == 0.0 ? num : num / denom;
}

template <typename T>
bool all_finite(const Matrix<T>& a) {
    for (T v : a.values())
        if (!std::isfinite(v)) return false;
    return true;
}

template <typename T>
void require_finite(const Matrix<T>& a, const char* what) {
    if (!all_finite(a)) throw NumericalError(std::string(what) + ": non-finite entries");
}

template <typename T>
double trace(const Matrix<T>& a) {
    double t = 0.0;
    for (std::size_t i = 0; i < std::min(a.rows(), a.cols()); ++i) t += a(i, i);
    return t;
}

template <typename T>
Matrix<T> gather_rows(const Matrix<T>& a, std::span<const std::size_t> indices) {
    Matrix<T> out(indices.size(), a.cols());
    for (std::size_t k = 0; k < indices.size(); ++k) {
        auto src = a.row(indices[k]);
        std::copy(src.begin(), src.end(), out.row(k).begin());
    }
    return out;
}

// Columns [begin, begin + count).
template <typename T>
Matrix<T> column_block(const Matrix<T>& a, std::size_t begin, std::size_t count) {
    if (begin + count > a.cols()) throw ShapeError("column_block: range exceeds matrix width");
    Matrix<T> out(a.rows(), count);
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < count; ++j) out(i, j) = a(i, begin + j);
    return out;
}

template <typename T>
Matrix<T> hconcat(const Matrix<T>& a, const Matrix<T>& b) {
    if (a.rows() != b.rows()) throw ShapeError("hconcat: row count mismatch");
    Matrix<T> out(a.rows(), a.cols() + b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto dst = out.row(i);
        std::copy(a.row(i).begin(), a.row(i).end(), dst.begin());
        std::copy(b.row(i).begin(), b.row(i).end(), dst.begin() + static_cast<std::ptrdiff_t>(a.cols()));
    }
    return out;
}

}  // namespace pifa
