#include "pifa/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "pifa/kernels.hpp"

namespace pifa {

DensityAllocation DensityAllocation::uniform(double global, std::size_t layers) {
    if (!(global > 0.0 && global <= 1.0)) throw ValidationError("global density must lie in (0, 1]");
    DensityAllocation a;
    a.global_density = global;
    a.layer_densities.assign(layers, global);
    a.module_densities.assign(layers, global);
    return a;
}

std::vector<LayerShape> layer_shapes(const ToyNetwork& net) {
    std::vector<LayerShape> shapes;
    for (std::size_t i = 0; i < net.layers.size(); ++i)
        shapes.push_back({net.layers[i].rows(), net.layers[i].cols(), net.tag(i)});
    return shapes;
}

DensityAllocation allocate_densities(double global, const std::map<std::string, double>& type_map,
                                     const std::vector<double>& layer_fractions,
                                     const std::vector<LayerShape>& shapes) {
    if (!(global > 0.0 && global <= 1.0)) throw ValidationError("global density must lie in (0, 1]");
    if (layer_fractions.size() != shapes.size()) {
        throw ValidationError("allocation: " + std::to_string(layer_fractions.size()) + " layer densities for " +
                              std::to_string(shapes.size()) + " layers");
    }
    for (const auto& [tag, d] : type_map)
        if (!(d > 0.0)) throw ValidationError("allocation: type density for '" + tag + "' must be positive");

    DensityAllocation a;
    a.global_density = global;
    a.type_densities = type_map;
    a.layer_densities = layer_fractions;
    a.module_densities.resize(shapes.size());

    double weighted = 0.0;
    double total = 0.0;
    for (std::size_t i = 0; i < shapes.size(); ++i) {
        if (!(layer_fractions[i] > 0.0)) {
            throw ValidationError("allocation: layer " + std::to_string(i) + " density must be positive");
        }
        auto it = type_map.find(shapes[i].tag);
        const double type_density = it == type_map.end() ? global : it->second;
        const double d = type_density * layer_fractions[i] / global;
        if (!(d > 0.0 && d <= 1.0)) {
            throw ValidationError("allocation: layer " + std::to_string(i) + " (" + shapes[i].tag +
                                  ") gets density " + std::to_string(d) + ", outside (0, 1]");
        }
        a.module_densities[i] = d;
        const double params = static_cast<double>(shapes[i].m) * static_cast<double>(shapes[i].n);
        weighted += d * params;
        total += params;
    }
    if (total == 0.0) return a;
    const double scale = global * total / weighted;
    for (std::size_t i = 0; i < shapes.size(); ++i) {
        a.module_densities[i] *= scale;
        if (!(a.module_densities[i] > 0.0 && a.module_densities[i] <= 1.0 + 1e-12)) {
            throw ValidationError("allocation: layer " + std::to_string(i) + " (" + shapes[i].tag +
                                  ") needs density " + std::to_string(a.module_densities[i]) +
                                  " after budget renormalisation");
        }
        a.module_densities[i] = std::min(a.module_densities[i], 1.0);
    }
    return a;
}

double allocation_mean_density(const DensityAllocation& alloc, const std::vector<LayerShape>& shapes) {
    double weighted = 0.0;
    double total = 0.0;
    for (std::size_t i = 0; i < shapes.size(); ++i) {
        const double params = static_cast<double>(shapes[i].m) * static_cast<double>(shapes[i].n);
        weighted += alloc.module_densities.at(i) * params;
        total += params;
    }
    return total == 0.0 ? 0.0 : weighted / total;
}

std::string_view method_name(CompressionMethod method) {
    switch (method) {
        case CompressionMethod::svd: return "svd";
        case CompressionMethod::whitened_svd: return "whitened-svd";
        case CompressionMethod::w_plus_m: return "w+m";
        case CompressionMethod::mpifa: return "mpifa";
    }
    return "unknown";
}

CompressionMethod parse_method(std::string_view name) {
    if (name == "svd") return CompressionMethod::svd;
    if (name == "whitened-svd" || name == "w") return CompressionMethod::whitened_svd;
    if (name == "w+m") return CompressionMethod::w_plus_m;
    if (name == "mpifa") return CompressionMethod::mpifa;
    throw ValidationError("unknown compression mode '" + std::string(name) + "'");
}

std::string_view flow_name(FlowMode flow) {
    return flow == FlowMode::compressed_flow ? "compressed" : "dense-weight";
}

FlowMode parse_flow(std::string_view name) {
    if (name == "compressed") return FlowMode::compressed_flow;
    if (name == "dense-weight") return FlowMode::dense_weight_flow;
    throw ValidationError("unknown flow mode '" + std::string(name) + "'");
}

namespace {

CountingMode counting_for(CompressionMethod method) {
    return method == CompressionMethod::mpifa ? CountingMode::pifa : CountingMode::svd_lowrank;
}

CalibrationAccumulator accumulate_layer(const DenseMatrix& w, const DenseMatrix& x_o, const DenseMatrix& x_u,
                                        double lambda, std::size_t chunk) {
    CalibrationAccumulator acc(w.rows(), w.cols(), lambda);
    const std::size_t total = x_u.cols();
    for (std::size_t begin = 0; begin < total; begin += chunk) {
        const std::size_t count = std::min(chunk, total - begin);
        acc.accumulate(w, column_block(x_o, begin, count), column_block(x_u, begin, count));
    }
    return acc;
}

}  // namespace

CompressedNetwork compress_network(const ToyNetwork& net, const DenseMatrix& calibration,
                                   const DensityAllocation& alloc, const CompressOptions& options) {
    net.validate();
    options.reconstruction.validate();
    if (options.chunk_columns == 0) throw ValidationError("chunk_columns must be positive");
    if (alloc.module_densities.size() != net.layers.size()) {
        throw ValidationError("allocation covers " + std::to_string(alloc.module_densities.size()) +
                              " layers, network has " + std::to_string(net.layers.size()));
    }
    const bool calibrated = options.method != CompressionMethod::svd;
    if (calibration.rows() != net.input_dim()) {
        throw ShapeError("calibration has " + std::to_string(calibration.rows()) + " rows, network input is " +
                         std::to_string(net.input_dim()));
    }
    if (calibrated && calibration.cols() == 0) throw ValidationError("calibration set is empty");

    CompressedNetwork out;
    out.activation = net.activation;
    DenseMatrix x_o = calibration;
    DenseMatrix x_u = calibration;
    const CountingMode counting = counting_for(options.method);

    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        const DenseMatrix& w = net.layers[i];
        const bool last = i + 1 == net.layers.size();
        try {
            const double density = alloc.module_densities[i];
            const std::size_t rank = density_to_rank(w.rows(), w.cols(), DensitySpec{density, counting});

            LayerProvenance prov;
            prov.method = std::string(method_name(options.method));
            prov.tag = net.tag(i);
            prov.rank = rank;
            prov.target_density = density;
            prov.original_parameters = w.size();

            CompressedLayer layer;
            if (options.method == CompressionMethod::svd) {
                layer = truncated_svd_prune(w, rank);
            } else {
                CalibrationAccumulator acc =
                    accumulate_layer(w, x_o, x_u, options.reconstruction.lambda, options.chunk_columns);
                LowRankFactors factors = whitened_svd_prune(w, acc.xxt(), rank, options.whitening_jitter);
                if (options.method == CompressionMethod::whitened_svd) {
                    layer = std::move(factors);
                } else {
                    ReconstructionResult rec = reconstruct_pair(acc, factors, w, options.reconstruction);
                    prov.conditions = rec.report;
                    if (options.method == CompressionMethod::w_plus_m) {
                        layer = std::move(rec.factors);
                    } else {
                        layer = pifa_build(rec.factors);
                    }
                }
            }
            prov.parameters = layer_parameters(layer);

            DenseMatrix next_o = matmul(w, x_o);
            DenseMatrix next_u =
                options.flow == FlowMode::compressed_flow ? layer_forward(layer, x_u) : matmul(w, x_u);
            if (!last) {
                apply_activation(next_o, net.activation);
                apply_activation(next_u, net.activation);
            }
            x_o = std::move(next_o);
            x_u = std::move(next_u);

            out.layers.push_back(std::move(layer));
            out.provenance.push_back(std::move(prov));
        } catch (Error& e) {
            e.add_context("layer " + std::to_string(i));
            throw;
        }
    }
    return out;
}

CompressedNetwork mpifa_compress(const ToyNetwork& net, const DenseMatrix& calibration,
                                 const DensityAllocation& alloc, const ReconstructionConfig& cfg, FlowMode flow) {
    CompressOptions options;
    options.method = CompressionMethod::mpifa;
    options.flow = flow;
    options.reconstruction = cfg;
    return compress_network(net, calibration, alloc, options);
}

double mean_squared_error(const DenseMatrix& a, const DenseMatrix& b) {
    require_same_shape(a, b, "mean_squared_error");
    if (a.size() == 0) return 0.0;
    const double f = frobenius_norm(a - b);
    return f * f / static_cast<double>(a.size());
}

EvaluationReport evaluate(const CompressedNetwork& reference, const CompressedNetwork& candidate,
                          const DenseMatrix& probes) {
    reference.validate();
    candidate.validate();
    if (reference.layers.size() != candidate.layers.size()) throw ShapeError("evaluate: networks differ in depth");
    for (std::size_t i = 0; i < reference.layers.size(); ++i) {
        if (layer_rows(reference.layers[i]) != layer_rows(candidate.layers[i]) ||
            layer_cols(reference.layers[i]) != layer_cols(candidate.layers[i])) {
            throw ShapeError("evaluate: layer " + std::to_string(i) + " shapes differ");
        }
    }
    const auto ref_trace = reference.trace(probes);
    const auto cand_trace = candidate.trace(probes);
    EvaluationReport report;
    report.probes = probes.cols();
    for (std::size_t i = 0; i < ref_trace.size(); ++i) {
        report.per_layer.push_back(
            {i, mean_squared_error(cand_trace[i], ref_trace[i]), relative_error(cand_trace[i], ref_trace[i])});
    }
    report.output_mse = report.per_layer.back().mse;
    report.relative_frobenius = report.per_layer.back().relative_frobenius;
    return report;
}

EvaluationReport evaluate(const ToyNetwork& reference, const CompressedNetwork& candidate, const DenseMatrix& probes) {
    return evaluate(as_compressed(reference), candidate, probes);
}

std::vector<LambdaSweepRow> lambda_sweep(const ToyNetwork& net, const DenseMatrix& calibration,
                                         const DenseMatrix& probes, const DensityAllocation& alloc,
                                         const std::vector<double>& lambdas, const CompressOptions& base) {
    std::vector<LambdaSweepRow> rows;
    std::vector<DenseMatrix> first_weights;
    for (double lambda : lambdas) {
        CompressOptions options = base;
        options.reconstruction.lambda = lambda;
        const CompressedNetwork compressed = compress_network(net, calibration, alloc, options);
        const EvaluationReport report = evaluate(net, compressed, probes);

        std::vector<DenseMatrix> weights;
        for (const auto& l : compressed.layers) weights.push_back(layer_dense(l));
        double change = 0.0;
        if (first_weights.empty()) {
            first_weights = weights;
        } else {
            double num = 0.0, den = 0.0;
            for (std::size_t i = 0; i < weights.size(); ++i) {
                const double d = frobenius_norm(weights[i] - first_weights[i]);
                const double f = frobenius_norm(first_weights[i]);
                num += d * d;
                den += f * f;
            }
            change = den == 0.0 ? std::sqrt(num) : std::sqrt(num / den);
        }
        rows.push_back({lambda, alloc.global_density, report.output_mse, report.relative_frobenius, change});
    }
    return rows;
}

namespace {

std::ofstream open_csv(const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out.precision(17);
    return out;
}

}  // namespace

void write_lambda_sweep_csv(const std::filesystem::path& path, const std::vector<LambdaSweepRow>& rows) {
    auto out = open_csv(path);
    out << "lambda,density,output_mse,relative_frobenius,weight_change\n";
    for (const auto& r : rows)
        out << r.lambda << ',' << r.density << ',' << r.output_mse << ',' << r.relative_frobenius << ','
            << r.weight_change << '\n';
    if (!out) throw IoError("write failed for " + path.string());
}

std::vector<ConditionSweepRow> condition_sweep(const DenseMatrix& w, const DenseMatrix& calibration, std::size_t rank,
                                               const std::vector<std::size_t>& sample_counts, double alpha) {
    if (calibration.rows() != w.cols()) throw ShapeError("condition_sweep: calibration rows must equal W columns");
    std::vector<std::size_t> counts = sample_counts;
    std::sort(counts.begin(), counts.end());
    if (!counts.empty() && counts.back() > calibration.cols()) {
        throw ValidationError("condition_sweep: requested " + std::to_string(counts.back()) + " samples, have " +
                              std::to_string(calibration.cols()));
    }
    const DenseMatrix vt = truncated_svd_prune(w, rank).vt;
    CalibrationAccumulator acc(w.rows(), w.cols(), 0.0);
    std::vector<ConditionSweepRow> rows;
    std::size_t done = 0;
    for (std::size_t count : counts) {
        if (count > done) {
            const DenseMatrix block = column_block(calibration, done, count - done);
            acc.accumulate(w, block, block);
            done = count;
        }
        if (done == 0) continue;
        const ReconstructionReport r = condition_report(acc, vt, alpha);
        rows.push_back({done, r.cond_vxxv, r.cond_xxt, r.cond_xxt_alpha});
    }
    return rows;
}

void write_condition_sweep_csv(const std::filesystem::path& path, const std::vector<ConditionSweepRow>& rows) {
    auto out = open_csv(path);
    out << "samples,cond_vxxv,cond_xxt,cond_xxt_alpha\n";
    for (const auto& r : rows)
        out << r.samples << ',' << r.cond_vxxv << ',' << r.cond_xxt << ',' << r.cond_xxt_alpha << '\n';
    if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace pifa
