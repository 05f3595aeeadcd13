#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "pifa/lowrank.hpp"
#include "pifa/matrix.hpp"
#include "pifa/pifa_layer.hpp"
#include "pifa/reconstruct.hpp"

namespace pifa {

enum class Activation { identity, relu };

std::string_view activation_name(Activation a);
Activation parse_activation(std::string_view name);
void apply_activation(DenseMatrix& x, Activation a);

// Chain of dense linear layers: h <- act(W_i h), with no activation after the
// last layer. Stands in for the module sequence of a transformer; the
// compression math is layer-local given the two data flows.
struct ToyNetwork {
    std::vector<DenseMatrix> layers;
    std::vector<std::string> tags;  // module type per layer (e.g. "attn", "mlp"); may be empty
    Activation activation = Activation::relu;

    std::size_t input_dim() const;
    std::size_t output_dim() const;
    std::uint64_t parameters() const;
    std::string tag(std::size_t i) const;
    void validate() const;
    DenseMatrix forward(const DenseMatrix& x) const;
};

using CompressedLayer = std::variant<DenseMatrix, LowRankFactors, PifaLayer>;

std::size_t layer_rows(const CompressedLayer& layer);
std::size_t layer_cols(const CompressedLayer& layer);
std::string_view layer_kind(const CompressedLayer& layer);
// Stored parameters under the same accounting as the count formulas (PIFA
// charges one parameter per pivot index).
std::uint64_t layer_parameters(const CompressedLayer& layer);
DenseMatrix layer_forward(const CompressedLayer& layer, const DenseMatrix& x);
DenseMatrix layer_dense(const CompressedLayer& layer);

struct LayerProvenance {
    std::string method = "dense";
    std::string tag;
    std::size_t rank = 0;
    double target_density = 1.0;
    std::uint64_t parameters = 0;
    std::uint64_t original_parameters = 0;
    std::optional<ReconstructionReport> conditions;
};

struct CompressedNetwork {
    std::vector<CompressedLayer> layers;
    std::vector<LayerProvenance> provenance;
    Activation activation = Activation::relu;

    std::size_t input_dim() const;
    std::size_t output_dim() const;
    std::uint64_t stored_parameters() const;
    std::uint64_t original_parameters() const;
    void validate() const;
    DenseMatrix forward(const DenseMatrix& x) const;
    // Post-activation output of every layer (the last one without activation).
    std::vector<DenseMatrix> trace(const DenseMatrix& x) const;
};

CompressedNetwork as_compressed(const ToyNetwork& net);

// Seeded generators so every experiment is self-contained.
struct ToyNetworkSpec {
    std::vector<std::size_t> dims{64, 64, 64};  // input dim followed by each layer's output dim
    Activation activation = Activation::relu;
    double spectral_decay = 0.7;  // singular values (1 + k)^-decay
    std::vector<std::string> tags;
    std::uint64_t seed = 0;
};

ToyNetwork make_toy_network(const ToyNetworkSpec& spec);

struct CalibrationSpec {
    std::size_t dim = 64;
    std::size_t columns = 128;
    // Draws from a second, differently shaped covariance.
    bool shifted = false;
    std::uint64_t seed = 0;
};

// Correlated Gaussian inputs: columns of A z with a fixed random mixing A and
// z standard normal. The mixing depends only on (dim, shifted), so calibration
// and probe sets built with different seeds share a distribution.
DenseMatrix make_calibration(const CalibrationSpec& spec);

// Network container: a JSON manifest next to PFT / PIFL layer files.
void write_network(const std::filesystem::path& dir, const CompressedNetwork& net,
                   const std::string& manifest_name = "manifest.json", const std::string& run_json = "{}");
CompressedNetwork read_network(const std::filesystem::path& manifest);

}  // namespace pifa
