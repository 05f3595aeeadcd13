#include "pifa/pft.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>

namespace pifa {

static_assert(std::endian::native == std::endian::little, "PFT I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'P', 'F', 'T', '1'};

}  // namespace

const char* dtype_name(DType dtype) { return dtype == DType::f32 ? "f32" : "f64"; }

std::size_t dtype_size(DType dtype) { return dtype == DType::f32 ? 4 : 8; }

std::uint64_t pft_file_bytes(std::size_t rows, std::size_t cols, DType dtype) {
    return kPftHeaderBytes + static_cast<std::uint64_t>(rows) * cols * dtype_size(dtype);
}

namespace io {

void Reader::bytes(void* dst, std::size_t count, const char* what) {
    in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(count));
    auto got = static_cast<std::size_t>(in_.gcount());
    if (got != count) throw FormatError(std::string("truncated ") + what, offset_ + got);
    offset_ += count;
}

std::uint8_t Reader::u8(const char* what) {
    std::uint8_t v = 0;
    bytes(&v, 1, what);
    return v;
}

std::uint64_t Reader::u64(const char* what) {
    std::uint64_t v = 0;
    bytes(&v, 8, what);
    return v;
}

template <typename T>
void Reader::values(std::span<T> dst, const char* what) {
    bytes(dst.data(), dst.size_bytes(), what);
}

template void Reader::values<float>(std::span<float>, const char*);
template void Reader::values<double>(std::span<double>, const char*);
template void Reader::values<std::uint64_t>(std::span<std::uint64_t>, const char*);

std::optional<std::uint64_t> remaining_bytes(std::istream& in) {
    const auto here = in.tellg();
    if (here < 0) return std::nullopt;
    in.seekg(0, std::ios::end);
    const auto end = in.tellg();
    in.seekg(here);
    if (end < 0 || !in) {
        in.clear();
        return std::nullopt;
    }
    return static_cast<std::uint64_t>(end - here);
}

void write_u8(std::ostream& out, std::uint8_t v) { out.write(reinterpret_cast<const char*>(&v), 1); }

void write_u64(std::ostream& out, std::uint64_t v) { out.write(reinterpret_cast<const char*>(&v), 8); }

template <typename T>
void write_values(std::ostream& out, std::span<const T> values) {
    out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size_bytes()));
}

template void write_values<float>(std::ostream&, std::span<const float>);
template void write_values<double>(std::ostream&, std::span<const double>);
template void write_values<std::uint64_t>(std::ostream&, std::span<const std::uint64_t>);

}  // namespace io

namespace {

struct PftHeader {
    DType dtype;
    std::uint64_t rows;
    std::uint64_t cols;
};

PftHeader read_header(io::Reader& reader) {
    char magic[4];
    reader.bytes(magic, 4, "magic");
    if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError("bad magic, expected PFT1", 0);
    std::uint8_t code = reader.u8("dtype");
    if (code > 1) throw FormatError("unknown dtype code " + std::to_string(code), reader.offset() - 1);
    std::uint8_t ndim = reader.u8("ndim");
    if (ndim != 2) throw FormatError("unsupported ndim " + std::to_string(ndim), reader.offset() - 1);
    PftHeader h{static_cast<DType>(code), reader.u64("rows"), reader.u64("cols")};
    const auto limit = std::numeric_limits<std::uint64_t>::max() / 8;
    if (h.cols != 0 && h.rows > limit / h.cols) throw FormatError("shape overflows", reader.offset());
    return h;
}

template <typename T>
Matrix<T> read_payload(io::Reader& reader, const PftHeader& h) {
    // Grow in bounded chunks so a forged header cannot force a huge allocation
    // before the truncation is detected.
    const std::uint64_t total = h.rows * h.cols;
    std::vector<T> data;
    constexpr std::uint64_t kChunk = 1u << 20;
    for (std::uint64_t done = 0; done < total;) {
        std::uint64_t take = std::min(kChunk, total - done);
        data.resize(static_cast<std::size_t>(done + take));
        reader.values(std::span<T>(data.data() + done, static_cast<std::size_t>(take)), "payload");
        done += take;
    }
    return Matrix<T>(static_cast<std::size_t>(h.rows), static_cast<std::size_t>(h.cols), std::move(data));
}

std::ifstream open_input(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return in;
}

}  // namespace

template <typename T>
void write_pft(std::ostream& out, const Matrix<T>& m) {
    require_finite(m, "write_pft");
    out.write(kMagic, 4);
    io::write_u8(out, static_cast<std::uint8_t>(dtype_of<T>()));
    io::write_u8(out, 2);
    io::write_u64(out, m.rows());
    io::write_u64(out, m.cols());
    io::write_values<T>(out, m.values());
}

template <typename T>
void write_pft(const std::filesystem::path& path, const Matrix<T>& m) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    write_pft(out, m);
    out.flush();
    if (!out) throw IoError("write failed for " + path.string());
}

template <typename T>
Matrix<T> read_pft(std::istream& in) {
    io::Reader reader(in);
    PftHeader h = read_header(reader);
    if (h.dtype != dtype_of<T>()) {
        throw FormatError(std::string("dtype mismatch: file holds ") + dtype_name(h.dtype) + ", expected " +
                              dtype_name(dtype_of<T>()),
                          4);
    }
    return read_payload<T>(reader, h);
}

template <typename T>
Matrix<T> read_pft(const std::filesystem::path& path) {
    auto in = open_input(path);
    return read_pft<T>(in);
}

DenseMatrix read_pft(const std::filesystem::path& path) { return read_pft<double>(path); }

AnyMatrix read_pft_any(const std::filesystem::path& path) {
    auto in = open_input(path);
    io::Reader reader(in);
    PftHeader h = read_header(reader);
    if (h.dtype == DType::f32) return read_payload<float>(reader, h);
    return read_payload<double>(reader, h);
}

template void write_pft<float>(std::ostream&, const MatrixF&);
template void write_pft<double>(std::ostream&, const DenseMatrix&);
template void write_pft<float>(const std::filesystem::path&, const MatrixF&);
template void write_pft<double>(const std::filesystem::path&, const DenseMatrix&);
template MatrixF read_pft<float>(std::istream&);
template DenseMatrix read_pft<double>(std::istream&);
template MatrixF read_pft<float>(const std::filesystem::path&);
template DenseMatrix read_pft<double>(const std::filesystem::path&);

}  // namespace pifa
