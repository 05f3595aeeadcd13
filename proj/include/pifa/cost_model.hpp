#pragma once

#include <cstdint>
#include <string_view>

#include "pifa/lowrank.hpp"
#include "pifa/pifa_layer.hpp"

namespace pifa {

enum class LayerKind { dense, lowrank, pifa };

std::string_view layer_kind_name(LayerKind kind);
LayerKind parse_layer_kind(std::string_view name);

// Forward cost of one m x n layer on a batch of b input columns.
struct CostModel {
    LayerKind kind = LayerKind::dense;
    std::uint64_t m = 0;
    std::uint64_t n = 0;
    std::uint64_t r = 0;  // ignored for dense
    std::uint64_t b = 1;
};

// dense 2mnb, lowrank 2br(m+n), pifa 2br(m+n-r). Throws ValidationError on
// zero dimensions or r outside [1, min(m, n)].
std::uint64_t flops(const CostModel& model);

// Parameters under the count formulas (pivot indices charged as one each).
std::uint64_t param_model(LayerKind kind, std::uint64_t m, std::uint64_t n, std::uint64_t r);
std::uint64_t memory_model(LayerKind kind, std::uint64_t m, std::uint64_t n, std::uint64_t r,
                           std::uint64_t bytes_per_scalar);

// (lowrank - pifa) / lowrank under the formulas: (r^2 - r) / (r(m+n)).
double formula_savings_vs_lowrank(std::uint64_t m, std::uint64_t n, std::uint64_t r);

// True serialized sizes, headers and u64 indices included. A low-rank layer is
// stored as two PFT files.
template <typename T>
std::uint64_t measured_bytes(const Matrix<T>& dense);
std::uint64_t measured_bytes(const LowRankFactors& factors);
template <typename T>
std::uint64_t measured_bytes(const BasicPifaLayer<T>& layer);

}  // namespace pifa
