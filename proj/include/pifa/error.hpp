#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

namespace pifa {

enum class ErrorKind { shape, validation, numerical, rank, format, io };

// Base for every error raised by the library. Context (e.g. "layer 2") can be
// prepended while the exception propagates; what() reflects it.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind), message_(message) {}

    ErrorKind kind() const noexcept { return kind_; }
    const char* what() const noexcept override { return message_.c_str(); }

    void add_context(const std::string& context) { message_ = context + ": " + message_; }

private:
    ErrorKind kind_;
    std::string message_;
};

class ShapeError : public Error {
public:
    explicit ShapeError(const std::string& message) : Error(ErrorKind::shape, message) {}
};

class ValidationError : public Error {
public:
    explicit ValidationError(const std::string& message) : Error(ErrorKind::validation, message) {}
};

// Singular systems, failed factorizations, non-convergence.
class NumericalError : public Error {
public:
    explicit NumericalError(const std::string& message,
                            std::optional<double> condition = std::nullopt,
                            std::optional<std::size_t> index = std::nullopt)
        : Error(ErrorKind::numerical, message), condition_(condition), index_(index) {}

    // Condition estimate of the offending system, when one was computed.
    std::optional<double> condition() const { return condition_; }
    // Failing pivot or iteration count, depending on the raising operation.
    std::optional<std::size_t> index() const { return index_; }

private:
    std::optional<double> condition_;
    std::optional<std::size_t> index_;
};

class RankError : public Error {
public:
    RankError(const std::string& message, std::size_t detected_rank)
        : Error(ErrorKind::rank, message), detected_rank_(detected_rank) {}

    std::size_t detected_rank() const { return detected_rank_; }

private:
    std::size_t detected_rank_;
};

class FormatError : public Error {
public:
    FormatError(const std::string& message, std::uint64_t offset)
        : Error(ErrorKind::format, message + " (at byte offset " + std::to_string(offset) + ")"),
          offset_(offset) {}

    std::uint64_t offset() const { return offset_; }

private:
    std::uint64_t offset_;
};

class IoError : public Error {
public:
    explicit IoError(const std::string& message) : Error(ErrorKind::io, message) {}
};

}  // namespace pifa
