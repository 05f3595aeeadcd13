#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

#include "pifa/matrix.hpp"

namespace pifa {

// Seeded generator with a platform-independent sample stream. mt19937_64 is
// fully specified by the standard; the distributions on top of it are not, so
// uniform and Gaussian draws are derived here directly from the raw bits.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

    std::uint64_t seed() const noexcept { return seed_; }

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Standard normal via Box-Muller; the second variate is cached.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        while (u1 == 0.0) u1 = uniform();
        double u2 = uniform();
        double radius = std::sqrt(-2.0 * std::log(u1));
        double angle = 2.0 * std::numbers::pi * u2;
        spare_ = radius * std::sin(angle);
        has_spare_ = true;
        return radius * std::cos(angle);
    }

    std::size_t index(std::size_t bound) { return static_cast<std::size_t>(uniform() * static_cast<double>(bound)); }

    DenseMatrix gaussian(std::size_t rows, std::size_t cols, double stddev = 1.0) {
        DenseMatrix m(rows, cols);
        for (double& v : m.values()) v = stddev * normal();
        return m;
    }

    DenseMatrix uniform_matrix(std::size_t rows, std::size_t cols, double lo = -1.0, double hi = 1.0) {
        DenseMatrix m(rows, cols);
        for (double& v : m.values()) v = uniform(lo, hi);
        return m;
    }

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace pifa
