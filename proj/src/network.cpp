#include "pifa/network.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <fstream>

#include <json.hpp>

#include "pifa/decomp.hpp"
#include "pifa/kernels.hpp"
#include "pifa/pft.hpp"
#include "pifa/rng.hpp"

namespace pifa {

using nlohmann::json;

std::string_view activation_name(Activation a) { return a == Activation::relu ? "relu" : "identity"; }

Activation parse_activation(std::string_view name) {
    if (name == "relu") return Activation::relu;
    if (name == "identity" || name == "linear") return Activation::identity;
    throw ValidationError("unknown activation '" + std::string(name) + "'");
}

void apply_activation(DenseMatrix& x, Activation a) {
    if (a == Activation::identity) return;
    for (double& v : x.values()) v = v > 0.0 ? v : 0.0;
}

std::size_t ToyNetwork::input_dim() const { return layers.empty() ? 0 : layers.front().cols(); }

std::size_t ToyNetwork::output_dim() const { return layers.empty() ? 0 : layers.back().rows(); }

std::uint64_t ToyNetwork::parameters() const {
    std::uint64_t total = 0;
    for (const auto& w : layers) total += w.size();
    return total;
}

std::string ToyNetwork::tag(std::size_t i) const { return i < tags.size() ? tags[i] : std::string("linear"); }

void ToyNetwork::validate() const {
    if (layers.empty()) throw ShapeError("network has no layers");
    if (!tags.empty() && tags.size() != layers.size()) throw ShapeError("network tag count differs from layer count");
    for (std::size_t i = 0; i < layers.size(); ++i) {
        if (layers[i].empty()) throw ShapeError("layer " + std::to_string(i) + " is empty");
        if (i > 0 && layers[i].cols() != layers[i - 1].rows()) {
            throw ShapeError("layer " + std::to_string(i) + " expects " + std::to_string(layers[i].cols()) +
                             " inputs but layer " + std::to_string(i - 1) + " produces " +
                             std::to_string(layers[i - 1].rows()));
        }
    }
}

DenseMatrix ToyNetwork::forward(const DenseMatrix& x) const { return as_compressed(*this).forward(x); }

std::size_t layer_rows(const CompressedLayer& layer) {
    return std::visit(
        [](const auto& l) -> std::size_t {
            using L = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<L, DenseMatrix>) return l.rows();
            else if constexpr (std::is_same_v<L, LowRankFactors>) return l.rows();
            else return l.m;
        },
        layer);
}

std::size_t layer_cols(const CompressedLayer& layer) {
    return std::visit(
        [](const auto& l) -> std::size_t {
            using L = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<L, DenseMatrix>) return l.cols();
            else if constexpr (std::is_same_v<L, LowRankFactors>) return l.cols();
            else return l.n;
        },
        layer);
}

std::string_view layer_kind(const CompressedLayer& layer) {
    switch (layer.index()) {
        case 0: return "dense";
        case 1: return "lowrank";
        default: return "pifa";
    }
}

std::uint64_t layer_parameters(const CompressedLayer& layer) {
    return std::visit(
        [](const auto& l) -> std::uint64_t {
            using L = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<L, DenseMatrix>) return l.size();
            else if constexpr (std::is_same_v<L, LowRankFactors>) return l.u.size() + l.vt.size();
            else return l.stored_entries();
        },
        layer);
}

DenseMatrix layer_forward(const CompressedLayer& layer, const DenseMatrix& x) {
    return std::visit(
        [&](const auto& l) -> DenseMatrix {
            using L = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<L, DenseMatrix>) return matmul(l, x);
            else if constexpr (std::is_same_v<L, LowRankFactors>) return l.forward(x);
            else return pifa_forward(l, x);
        },
        layer);
}

DenseMatrix layer_dense(const CompressedLayer& layer) {
    return std::visit(
        [](const auto& l) -> DenseMatrix {
            using L = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<L, DenseMatrix>) return l;
            else if constexpr (std::is_same_v<L, LowRankFactors>) return l.product();
            else return reconstruct_dense(l);
        },
        layer);
}

std::size_t CompressedNetwork::input_dim() const { return layers.empty() ? 0 : layer_cols(layers.front()); }

std::size_t CompressedNetwork::output_dim() const { return layers.empty() ? 0 : layer_rows(layers.back()); }

std::uint64_t CompressedNetwork::stored_parameters() const {
    std::uint64_t total = 0;
    for (const auto& l : layers) total += layer_parameters(l);
    return total;
}

std::uint64_t CompressedNetwork::original_parameters() const {
    std::uint64_t total = 0;
    for (const auto& l : layers) total += static_cast<std::uint64_t>(layer_rows(l)) * layer_cols(l);
    return total;
}

void CompressedNetwork::validate() const {
    if (layers.empty()) throw ShapeError("network has no layers");
    for (std::size_t i = 1; i < layers.size(); ++i) {
        if (layer_cols(layers[i]) != layer_rows(layers[i - 1])) {
            throw ShapeError("layer " + std::to_string(i) + " does not chain with layer " + std::to_string(i - 1));
        }
    }
}

std::vector<DenseMatrix> CompressedNetwork::trace(const DenseMatrix& x) const {
    if (x.rows() != input_dim()) {
        throw ShapeError("network input has " + std::to_string(x.rows()) + " rows, expected " +
                         std::to_string(input_dim()));
    }
    std::vector<DenseMatrix> outputs;
    outputs.reserve(layers.size());
    const DenseMatrix* h = &x;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        DenseMatrix y = layer_forward(layers[i], *h);
        if (i + 1 < layers.size()) apply_activation(y, activation);
        outputs.push_back(std::move(y));
        h = &outputs.back();
    }
    return outputs;
}

DenseMatrix CompressedNetwork::forward(const DenseMatrix& x) const {
    if (x.rows() != input_dim()) {
        throw ShapeError("network input has " + std::to_string(x.rows()) + " rows, expected " +
                         std::to_string(input_dim()));
    }
    DenseMatrix h = x;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        h = layer_forward(layers[i], h);
        if (i + 1 < layers.size()) apply_activation(h, activation);
    }
    return h;
}

CompressedNetwork as_compressed(const ToyNetwork& net) {
    net.validate();
    CompressedNetwork out;
    out.activation = net.activation;
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        out.layers.emplace_back(net.layers[i]);
        LayerProvenance p;
        p.tag = net.tag(i);
        p.rank = std::min(net.layers[i].rows(), net.layers[i].cols());
        p.parameters = p.original_parameters = net.layers[i].size();
        out.provenance.push_back(p);
    }
    return out;
}

namespace {

DenseMatrix random_orthonormal(std::size_t rows, std::size_t cols, Rng& rng) {
    return qr_column_pivoted(rng.gaussian(rows, cols), 0.0).q;
}

}  // namespace

ToyNetwork make_toy_network(const ToyNetworkSpec& spec) {
    if (spec.dims.size() < 2) throw ValidationError("toy network needs an input dim and at least one layer");
    for (std::size_t d : spec.dims)
        if (d == 0) throw ValidationError("toy network dims must be positive");
    if (!spec.tags.empty() && spec.tags.size() != spec.dims.size() - 1) {
        throw ValidationError("toy network tag count must equal the layer count");
    }
    Rng rng(spec.seed);
    ToyNetwork net;
    net.activation = spec.activation;
    net.tags = spec.tags;
    for (std::size_t i = 0; i + 1 < spec.dims.size(); ++i) {
        const std::size_t n = spec.dims[i];
        const std::size_t m = spec.dims[i + 1];
        const std::size_t k = std::min(m, n);
        DenseMatrix left = random_orthonormal(m, k, rng);
        DenseMatrix right = random_orthonormal(n, k, rng);
        for (std::size_t row = 0; row < m; ++row)
            for (std::size_t j = 0; j < k; ++j) left(row, j) *= std::pow(1.0 + static_cast<double>(j), -spec.spectral_decay);
        net.layers.push_back(matmul(left, transpose(right)));
    }
    return net;
}

DenseMatrix make_calibration(const CalibrationSpec& spec) {
    if (spec.dim == 0) throw ValidationError("calibration dim must be positive");
    Rng mixing_rng(0x9e3779b97f4a7c15ull ^ (spec.dim * 2 + (spec.shifted ? 1 : 0)));
    DenseMatrix mixing = random_orthonormal(spec.dim, spec.dim, mixing_rng);
    const double rate = spec.shifted ? 1.5 : 4.0;
    for (std::size_t i = 0; i < spec.dim; ++i)
        for (std::size_t j = 0; j < spec.dim; ++j)
            mixing(i, j) *= std::exp(-rate * static_cast<double>(j) / static_cast<double>(spec.dim)) + 0.02;
    Rng rng(spec.seed);
    return matmul(mixing, rng.gaussian(spec.dim, spec.columns));
}

namespace {

json provenance_to_json(const LayerProvenance& p) {
    json j{{"method", p.method},
           {"tag", p.tag},
           {"rank", p.rank},
           {"target_density", p.target_density},
           {"parameters", p.parameters},
           {"original_parameters", p.original_parameters}};
    if (p.conditions) {
        j["conditions"] = {{"samples", p.conditions->samples},
                           {"cond_vxxv", p.conditions->cond_vxxv},
                           {"cond_xxt", std::isfinite(p.conditions->cond_xxt) ? json(p.conditions->cond_xxt) : json("inf")},
                           {"cond_xxt_alpha", std::isfinite(p.conditions->cond_xxt_alpha)
                                                  ? json(p.conditions->cond_xxt_alpha)
                                                  : json("inf")}};
    }
    return j;
}

double json_number(const json& j) {
    if (j.is_string()) return std::numeric_limits<double>::infinity();
    return j.get<double>();
}

LayerProvenance provenance_from_json(const json& j) {
    LayerProvenance p;
    p.method = j.value("method", "dense");
    p.tag = j.value("tag", "");
    p.rank = j.value("rank", std::size_t{0});
    p.target_density = j.value("target_density", 1.0);
    p.parameters = j.value("parameters", std::uint64_t{0});
    p.original_parameters = j.value("original_parameters", std::uint64_t{0});
    if (j.contains("conditions")) {
        const auto& c = j["conditions"];
        ReconstructionReport r;
        r.samples = c.value("samples", std::size_t{0});
        r.cond_vxxv = json_number(c.at("cond_vxxv"));
        r.cond_xxt = json_number(c.at("cond_xxt"));
        r.cond_xxt_alpha = json_number(c.at("cond_xxt_alpha"));
        p.conditions = r;
    }
    return p;
}

}  // namespace

void write_network(const std::filesystem::path& dir, const CompressedNetwork& net, const std::string& manifest_name,
                   const std::string& run_json) {
    net.validate();
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

    json manifest{{"format", "pifa-network"}, {"version", 1}, {"activation", activation_name(net.activation)}};
    json layers = json::array();
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        char stem[32];
        std::snprintf(stem, sizeof stem, "layer_%03zu", i);
        json entry{{"kind", layer_kind(net.layers[i])},
                   {"m", layer_rows(net.layers[i])},
                   {"n", layer_cols(net.layers[i])}};
        std::visit(
            [&](const auto& l) {
                using L = std::decay_t<decltype(l)>;
                if constexpr (std::is_same_v<L, DenseMatrix>) {
                    entry["file"] = std::string(stem) + ".pft";
                    write_pft(dir / entry["file"].get<std::string>(), l);
                } else if constexpr (std::is_same_v<L, LowRankFactors>) {
                    entry["u"] = std::string(stem) + ".u.pft";
                    entry["vt"] = std::string(stem) + ".vt.pft";
                    write_pft(dir / entry["u"].get<std::string>(), l.u);
                    write_pft(dir / entry["vt"].get<std::string>(), l.vt);
                } else {
                    entry["file"] = std::string(stem) + ".pifl";
                    entry["rank"] = l.rank();
                    write_pifa(dir / entry["file"].get<std::string>(), l);
                }
            },
            net.layers[i]);
        layers.push_back(entry);
    }
    manifest["layers"] = layers;
    json prov = json::array();
    for (const auto& p : net.provenance) prov.push_back(provenance_to_json(p));
    manifest["provenance"] = prov;
    manifest["run"] = json::parse(run_json);

    std::ofstream out(dir / manifest_name);
    if (!out) throw IoError("cannot write manifest in " + dir.string());
    out << manifest.dump(2) << '\n';
}

CompressedNetwork read_network(const std::filesystem::path& manifest_path) {
    std::ifstream in(manifest_path);
    if (!in) throw IoError("cannot open " + manifest_path.string());
    json manifest;
    try {
        manifest = json::parse(in);
    } catch (const json::exception& e) {
        throw FormatError(std::string("manifest is not valid JSON: ") + e.what(), 0);
    }
    const auto dir = manifest_path.parent_path();
    CompressedNetwork net;
    try {
        if (manifest.value("format", "") != "pifa-network") throw FormatError("manifest format is not pifa-network", 0);
        net.activation = parse_activation(manifest.at("activation").get<std::string>());
        for (const auto& entry : manifest.at("layers")) {
            const std::string kind = entry.at("kind").get<std::string>();
            if (kind == "dense") {
                net.layers.emplace_back(read_pft(dir / entry.at("file").get<std::string>()));
            } else if (kind == "lowrank") {
                LowRankFactors f{read_pft(dir / entry.at("u").get<std::string>()),
                                 read_pft(dir / entry.at("vt").get<std::string>())};
                f.validate();
                net.layers.emplace_back(std::move(f));
            } else if (kind == "pifa") {
                net.layers.emplace_back(read_pifa(dir / entry.at("file").get<std::string>()));
            } else {
                throw FormatError("unknown layer kind '" + kind + "'", 0);
            }
        }
        if (manifest.contains("provenance")) {
            for (const auto& p : manifest["provenance"]) net.provenance.push_back(provenance_from_json(p));
        }
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed manifest: ") + e.what(), 0);
    }
    if (net.provenance.size() != net.layers.size()) {
        net.provenance.resize(net.layers.size());
        for (std::size_t i = 0; i < net.layers.size(); ++i) {
            auto& p = net.provenance[i];
            if (p.original_parameters == 0) {
                p.method = std::string(layer_kind(net.layers[i]));
                p.parameters = layer_parameters(net.layers[i]);
                p.original_parameters = static_cast<std::uint64_t>(layer_rows(net.layers[i])) * layer_cols(net.layers[i]);
            }
        }
    }
    net.validate();
    return net;
}

}  // namespace pifa
