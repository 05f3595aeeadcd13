#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <variant>

#include "pifa/matrix.hpp"

namespace pifa {

// PFT v1 tensor container, little-endian:
//   "PFT1" | dtype u8 (0 = f32, 1 = f64) | ndim u8 (= 2) | rows u64 | cols u64 | rows*cols values
enum class DType : std::uint8_t { f32 = 0, f64 = 1 };

inline constexpr std::size_t kPftHeaderBytes = 4 + 1 + 1 + 8 + 8;

const char* dtype_name(DType dtype);
std::size_t dtype_size(DType dtype);

template <typename T>
constexpr DType dtype_of();
template <>
constexpr DType dtype_of<float>() { return DType::f32; }
template <>
constexpr DType dtype_of<double>() { return DType::f64; }

template <typename T>
void write_pft(std::ostream& out, const Matrix<T>& m);
template <typename T>
void write_pft(const std::filesystem::path& path, const Matrix<T>& m);

// Reads a PFT payload of the requested dtype; a dtype mismatch is a format error.
template <typename T>
Matrix<T> read_pft(std::istream& in);
template <typename T>
Matrix<T> read_pft(const std::filesystem::path& path);

DenseMatrix read_pft(const std::filesystem::path& path);

// Reads either dtype without conversion.
using AnyMatrix = std::variant<MatrixF, DenseMatrix>;
AnyMatrix read_pft_any(const std::filesystem::path& path);

// Bytes written by write_pft for the given shape.
std::uint64_t pft_file_bytes(std::size_t rows, std::size_t cols, DType dtype);

namespace io {

// Little-endian primitives shared by the PFT and PIFL readers. Reader tracks
// the byte offset so format errors can report where they happened.
class Reader {
public:
    explicit Reader(std::istream& in) : in_(in) {}

    void bytes(void* dst, std::size_t count, const char* what);
    std::uint8_t u8(const char* what);
    std::uint64_t u64(const char* what);
    std::uint64_t offset() const { return offset_; }

    template <typename T>
    void values(std::span<T> dst, const char* what);

private:
    std::istream& in_;
    std::uint64_t offset_ = 0;
};

// Bytes left in a seekable stream; nullopt when the stream cannot seek.
std::optional<std::uint64_t> remaining_bytes(std::istream& in);

void write_u8(std::ostream& out, std::uint8_t v);
void write_u64(std::ostream& out, std::uint64_t v);

template <typename T>
void write_values(std::ostream& out, std::span<const T> values);

}  // namespace io

}  // namespace pifa
