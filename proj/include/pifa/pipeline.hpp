#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pifa/network.hpp"
#include "pifa/reconstruct.hpp"

namespace pifa {

// Per-layer densities. module_densities is what compression consumes; the
// other fields record how it was derived.
struct DensityAllocation {
    double global_density = 1.0;
    std::map<std::string, double> type_densities;
    std::vector<double> layer_densities;
    std::vector<double> module_densities;

    static DensityAllocation uniform(double global, std::size_t layers);
};

struct LayerShape {
    std::size_t m = 0;
    std::size_t n = 0;
    std::string tag;
};

std::vector<LayerShape> layer_shapes(const ToyNetwork& net);

// module = type x layer / global, then one proportional rescale so the
// parameter-weighted mean equals the global density. Types missing from
// type_map use the global density.
DensityAllocation allocate_densities(double global, const std::map<std::string, double>& type_map,
                                     const std::vector<double>& layer_fractions,
                                     const std::vector<LayerShape>& shapes);

// Mean stored density implied by an allocation over the given shapes.
double allocation_mean_density(const DensityAllocation& alloc, const std::vector<LayerShape>& shapes);

enum class CompressionMethod {
    svd,           // truncated SVD, no calibration
    whitened_svd,  // "W": activation-whitened truncation
    w_plus_m,      // whitened truncation + online reconstruction, stored as factors
    mpifa,         // whitened truncation + reconstruction + PIFA at PIFA-mode rank
};

std::string_view method_name(CompressionMethod method);
CompressionMethod parse_method(std::string_view name);

// Where the next layer's low-rank-flow input comes from.
enum class FlowMode {
    compressed_flow,    // U_r V_r^T X_u
    dense_weight_flow,  // W X_u
};

std::string_view flow_name(FlowMode flow);
FlowMode parse_flow(std::string_view name);

struct CompressOptions {
    CompressionMethod method = CompressionMethod::mpifa;
    FlowMode flow = FlowMode::compressed_flow;
    ReconstructionConfig reconstruction;
    std::size_t chunk_columns = 32;  // calibration columns folded into the accumulator per update
    std::optional<double> whitening_jitter;
};

// Processes layers in order, carrying the dense and low-rank data flows.
CompressedNetwork compress_network(const ToyNetwork& net, const DenseMatrix& calibration,
                                   const DensityAllocation& alloc, const CompressOptions& options);

CompressedNetwork mpifa_compress(const ToyNetwork& net, const DenseMatrix& calibration,
                                 const DensityAllocation& alloc, const ReconstructionConfig& cfg,
                                 FlowMode flow = FlowMode::compressed_flow);

struct LayerError {
    std::size_t layer = 0;
    double mse = 0.0;
    double relative_frobenius = 0.0;
};

struct EvaluationReport {
    double output_mse = 0.0;
    double relative_frobenius = 0.0;
    std::vector<LayerError> per_layer;
    std::size_t probes = 0;
};

// Output error of `candidate` against `reference` on probe columns, plus the
// error of every intermediate layer output, showing how it accumulates.
EvaluationReport evaluate(const CompressedNetwork& reference, const CompressedNetwork& candidate,
                          const DenseMatrix& probes);
EvaluationReport evaluate(const ToyNetwork& reference, const CompressedNetwork& candidate, const DenseMatrix& probes);

double mean_squared_error(const DenseMatrix& a, const DenseMatrix& b);

struct LambdaSweepRow {
    double lambda = 0.0;
    double density = 0.0;
    double output_mse = 0.0;
    double relative_frobenius = 0.0;
    double weight_change = 0.0;  // relative Frobenius distance of layer weights from the first row's
};

std::vector<LambdaSweepRow> lambda_sweep(const ToyNetwork& net, const DenseMatrix& calibration,
                                         const DenseMatrix& probes, const DensityAllocation& alloc,
                                         const std::vector<double>& lambdas, const CompressOptions& base);

void write_lambda_sweep_csv(const std::filesystem::path& path, const std::vector<LambdaSweepRow>& rows);

struct ConditionSweepRow {
    std::size_t samples = 0;
    double cond_vxxv = 0.0;
    double cond_xxt = 0.0;
    double cond_xxt_alpha = 0.0;
};

// Condition numbers of V^T X X^T V and X X^T (+ alpha I) as calibration columns
// are folded in. V comes from the rank-r truncated SVD of w and stays fixed, so
// only the sample count varies.
std::vector<ConditionSweepRow> condition_sweep(const DenseMatrix& w, const DenseMatrix& calibration, std::size_t rank,
                                               const std::vector<std::size_t>& sample_counts, double alpha);

void write_condition_sweep_csv(const std::filesystem::path& path, const std::vector<ConditionSweepRow>& rows);

}  // namespace pifa
