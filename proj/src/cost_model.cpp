#include "pifa/cost_model.hpp"

#include <algorithm>
#include <sstream>
#include <string>

#include "pifa/pft.hpp"

namespace pifa {

std::string_view layer_kind_name(LayerKind kind) {
    switch (kind) {
        case LayerKind::dense: return "dense";
        case LayerKind::lowrank: return "lowrank";
        case LayerKind::pifa: return "pifa";
    }
    return "unknown";
}

LayerKind parse_layer_kind(std::string_view name) {
    if (name == "dense") return LayerKind::dense;
    if (name == "lowrank") return LayerKind::lowrank;
    if (name == "pifa") return LayerKind::pifa;
    throw ValidationError("unknown layer kind '" + std::string(name) + "'");
}

namespace {

void check_dims(LayerKind kind, std::uint64_t m, std::uint64_t n, std::uint64_t r) {
    if (m == 0 || n == 0) throw ValidationError("cost model: dimensions must be positive");
    if (kind != LayerKind::dense && (r == 0 || r > std::min(m, n))) {
        throw ValidationError("cost model: rank " + std::to_string(r) + " outside [1, min(m, n)]");
    }
}

}  // namespace

std::uint64_t flops(const CostModel& model) {
    check_dims(model.kind, model.m, model.n, model.r);
    if (model.b == 0) throw ValidationError("cost model: batch must be positive");
    const std::uint64_t b = model.b, m = model.m, n = model.n, r = model.r;
    switch (model.kind) {
        case LayerKind::dense: return 2 * m * n * b;
        case LayerKind::lowrank: return 2 * b * r * (m + n);
        case LayerKind::pifa: return 2 * b * r * (m + n - r);
    }
    return 0;
}

std::uint64_t param_model(LayerKind kind, std::uint64_t m, std::uint64_t n, std::uint64_t r) {
    check_dims(kind, m, n, r);
    switch (kind) {
        case LayerKind::dense: return m * n;
        case LayerKind::lowrank: return lowrank_param_count(m, n, r);
        case LayerKind::pifa: return pifa_param_count(m, n, r);
    }
    return 0;
}

std::uint64_t memory_model(LayerKind kind, std::uint64_t m, std::uint64_t n, std::uint64_t r,
                           std::uint64_t bytes_per_scalar) {
    return param_model(kind, m, n, r) * bytes_per_scalar;
}

double formula_savings_vs_lowrank(std::uint64_t m, std::uint64_t n, std::uint64_t r) {
    const double lowrank = static_cast<double>(lowrank_param_count(m, n, r));
    return (lowrank - static_cast<double>(pifa_param_count(m, n, r))) / lowrank;
}

namespace {

template <typename Writer>
std::uint64_t serialized_size(Writer&& write) {
    std::ostringstream out(std::ios::binary);
    write(out);
    return static_cast<std::uint64_t>(out.tellp());
}

}  // namespace

template <typename T>
std::uint64_t measured_bytes(const Matrix<T>& dense) {
    return serialized_size([&](std::ostream& out) { write_pft(out, dense); });
}

std::uint64_t measured_bytes(const LowRankFactors& factors) {
    return measured_bytes(factors.u) + measured_bytes(factors.vt);
}

template <typename T>
std::uint64_t measured_bytes(const BasicPifaLayer<T>& layer) {
    return serialized_size([&](std::ostream& out) { write_pifa(out, layer); });
}

template std::uint64_t measured_bytes<float>(const MatrixF&);
template std::uint64_t measured_bytes<double>(const DenseMatrix&);
template std::uint64_t measured_bytes<float>(const PifaLayerF&);
template std::uint64_t measured_bytes<double>(const PifaLayer&);

}  // namespace pifa
