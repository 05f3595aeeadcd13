// pifa: command-line front end.
//
//   pifa generate network|calib   seeded toy networks and calibration sets
//   pifa factorize                 W.pft -> layer.pifl
//   pifa inspect                   describe a .pft / .pifl / manifest
//   pifa reconstruct               whitened prune + online reconstruction of one layer
//   pifa compress                  whole-network compression
//   pifa bench                     dense / lowrank / pifa timing sweep
//   pifa eval                      compare two networks on probe inputs
//   pifa sweep lambda|calib        mix-ratio and calibration-size sweeps
//
// Exit codes: 0 success, 2 validation/shape, 3 numerical/rank, 4 IO/format.
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pifa/bench.hpp"
#include "pifa/cost_model.hpp"
#include "pifa/kernels.hpp"
#include "pifa/network.hpp"
#include "pifa/pft.hpp"
#include "pifa/pifa_layer.hpp"
#include "pifa/pipeline.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace pifa;

namespace {

int exit_code(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::shape:
        case ErrorKind::validation: return 2;
        case ErrorKind::numerical:
        case ErrorKind::rank: return 3;
        case ErrorKind::format:
        case ErrorKind::io: return 4;
    }
    return 1;
}

// --config file.json: each key names a long flag of the selected subcommand.
// Keys whose flag is already on the command line are skipped, so flags win.
std::vector<std::string> expand_config(int argc, char** argv, std::string& config_path) {
    std::vector<std::string> args(argv + 1, argv + argc);
    std::vector<std::string> kept;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) {
            config_path = args[++i];
        } else if (args[i].rfind("--config=", 0) == 0) {
            config_path = args[i].substr(9);
        } else {
            kept.push_back(args[i]);
        }
    }
    if (config_path.empty()) return kept;

    std::ifstream in(config_path);
    if (!in) throw IoError("cannot open config " + config_path);
    json cfg;
    try {
        in >> cfg;
    } catch (const json::exception& e) {
        throw FormatError("config " + config_path + " is not valid JSON: " + e.what(), 0);
    }
    if (!cfg.is_object()) throw ValidationError("config " + config_path + " must be a JSON object");

    std::set<std::string> given;
    for (const auto& a : kept) {
        if (a.rfind("--", 0) != 0) continue;
        given.insert(a.substr(2, a.find('=') == std::string::npos ? std::string::npos : a.find('=') - 2));
    }
    auto scalar = [](const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); };
    for (const auto& [key, value] : cfg.items()) {
        if (given.count(key)) continue;
        if (value.is_boolean()) {
            if (value.get<bool>()) kept.push_back("--" + key);
        } else if (value.is_array()) {
            std::string joined;
            for (const auto& v : value) joined += (joined.empty() ? "" : ",") + scalar(v);
            kept.push_back("--" + key);
            kept.push_back(joined);
        } else if (!value.is_null()) {
            kept.push_back("--" + key);
            kept.push_back(scalar(value));
        }
    }
    return kept;
}

// Numbers stay numbers in the manifest; everything else is kept as text.
json typed(const std::string& text) {
    if (text.empty()) return text;
    char* end = nullptr;
    const long long i = std::strtoll(text.c_str(), &end, 10);
    if (*end == '\0') return i;
    const double d = std::strtod(text.c_str(), &end);
    if (*end == '\0') return d;
    return text;
}

json typed(const std::vector<std::string>& texts) {
    json out = json::array();
    for (const auto& t : texts) out.push_back(typed(t));
    return out;
}

// Every option of the selected command with its final value.
json resolved_config(const CLI::App* app) {
    json out = json::object();
    for (const CLI::Option* opt : app->get_options()) {
        if (opt->get_lnames().empty()) continue;
        const std::string name = opt->get_lnames().front();
        if (name == "help" || name == "help-all") continue;
        if (opt->get_expected_max() == 0) {
            out[name] = opt->count() > 0;
            continue;
        }
        if (opt->count() == 0) {
            if (opt->get_default_str().empty()) {
                out[name] = nullptr;
            } else {
                out[name] = typed(opt->get_default_str());
            }
            continue;
        }
        const auto& results = opt->results();
        if (results.size() == 1 && opt->get_items_expected_max() <= 1) {
            out[name] = typed(results.front());
        } else {
            out[name] = typed(results);
        }
    }
    return out;
}

struct RunContext {
    std::string command;
    std::string config_path;
    const CLI::App* app = nullptr;

    json manifest(const json& result = json::object()) const {
        json j;
        j["command"] = command;
        j["config"] = resolved_config(app);
        if (!config_path.empty()) j["config_file"] = config_path;
        j["threads"] = num_threads();
        if (!result.empty()) j["result"] = result;
        return j;
    }
};

void write_json(const fs::path& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << j.dump(2) << '\n';
    if (!out) throw IoError("write failed for " + path.string());
}

// Run manifest next to a file output, or inside a directory output.
void write_run_manifest(const fs::path& out, const RunContext& ctx, const json& result = json::object()) {
    const fs::path target = fs::is_directory(out) ? out / "run.json" : fs::path(out.string() + ".run.json");
    write_json(target, ctx.manifest(result));
}

DenseMatrix load_matrix(const fs::path& path) {
    AnyMatrix any = read_pft_any(path);
    if (auto* f = std::get_if<MatrixF>(&any)) return matrix_cast<double>(*f);
    return std::get<DenseMatrix>(std::move(any));
}

ToyNetwork as_toy(const CompressedNetwork& net) {
    ToyNetwork toy;
    toy.activation = net.activation;
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        const auto* dense = std::get_if<DenseMatrix>(&net.layers[i]);
        if (!dense) {
            throw ValidationError("layer " + std::to_string(i) + " is " + std::string(layer_kind(net.layers[i])) +
                                  "; compression needs a dense model");
        }
        toy.layers.push_back(*dense);
        toy.tags.push_back(i < net.provenance.size() && !net.provenance[i].tag.empty() ? net.provenance[i].tag
                                                                                        : toy.tag(i));
    }
    toy.validate();
    return toy;
}

std::map<std::string, double> parse_type_densities(const std::vector<std::string>& items) {
    std::map<std::string, double> out;
    for (const auto& item : items) {
        const auto eq = item.find('=');
        if (eq == std::string::npos || eq == 0) throw ValidationError("--type-density expects tag=value, got " + item);
        try {
            out[item.substr(0, eq)] = std::stod(item.substr(eq + 1));
        } catch (const std::exception&) {
            throw ValidationError("--type-density value is not a number: " + item);
        }
    }
    return out;
}

DensityAllocation build_allocation(const ToyNetwork& net, double density, const std::vector<std::string>& types,
                                   std::vector<double> layer_fractions) {
    if (types.empty() && layer_fractions.empty()) return DensityAllocation::uniform(density, net.layers.size());
    if (layer_fractions.empty()) layer_fractions.assign(net.layers.size(), density);
    return allocate_densities(density, parse_type_densities(types), layer_fractions, layer_shapes(net));
}

json conditions_json(const std::optional<ReconstructionReport>& c) {
    if (!c) return nullptr;
    auto num = [](double v) -> json { return std::isfinite(v) ? json(v) : json("inf"); };
    return {{"samples", c->samples},
            {"cond_vxxv", num(c->cond_vxxv)},
            {"cond_xxt", num(c->cond_xxt)},
            {"cond_xxt_alpha", num(c->cond_xxt_alpha)}};
}

json evaluation_json(const EvaluationReport& r) {
    json layers = json::array();
    for (const auto& l : r.per_layer)
        layers.push_back({{"layer", l.layer}, {"mse", l.mse}, {"relative_frobenius", l.relative_frobenius}});
    return {{"probes", r.probes},
            {"output_mse", r.output_mse},
            {"relative_frobenius", r.relative_frobenius},
            {"per_layer", layers}};
}

ReconstructionConfig reconstruction_config(double lambda, double alpha, const std::string& update) {
    ReconstructionConfig cfg;
    cfg.lambda = lambda;
    cfg.alpha = alpha;
    cfg.update_u = update == "both" || update == "u";
    cfg.update_v = update == "both" || update == "v";
    cfg.validate();
    return cfg;
}

const std::vector<std::string> kModes{"mpifa", "w+m", "whitened-svd", "svd"};
const std::vector<std::string> kFlows{"compressed", "dense-weight"};
const std::vector<std::string> kUpdates{"both", "u", "v"};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Pivoting factorization and low-rank reconstruction toolkit"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Show help for all subcommands");
    int threads = 0;
    app.add_option("--threads", threads, "Kernel threads (default: PIFA_NUM_THREADS or OpenMP default)")
        ->check(CLI::NonNegativeNumber);

    RunContext ctx;

    // generate
    auto* gen = app.add_subcommand("generate", "Create seeded toy networks and calibration sets");
    gen->require_subcommand(1);
    std::vector<std::size_t> g_dims{64, 64, 64};
    std::string g_activation = "relu";
    double g_decay = 0.7;
    std::vector<std::string> g_tags;
    std::uint64_t g_seed = 0;
    std::string g_out;
    auto* gen_net = gen->add_subcommand("network", "Write a toy network manifest and its layer files");
    gen_net->add_option("--dims", g_dims, "Input dim followed by each layer's output dim")
        ->delimiter(',')
        ->capture_default_str();
    gen_net->add_option("--activation", g_activation)->check(CLI::IsMember({"relu", "identity"}))->capture_default_str();
    gen_net->add_option("--decay", g_decay, "Singular values decay as (1+k)^-decay")->capture_default_str();
    gen_net->add_option("--tags", g_tags, "Module type per layer")->delimiter(',');
    gen_net->add_option("--seed", g_seed)->capture_default_str();
    gen_net->add_option("--out", g_out, "Output directory")->required();

    std::size_t c_dim = 64, c_columns = 128;
    bool c_shifted = false;
    std::uint64_t c_seed = 0;
    std::string c_out;
    auto* gen_calib = gen->add_subcommand("calib", "Write a calibration or probe set (dim x columns PFT)");
    gen_calib->add_option("--dim", c_dim)->check(CLI::PositiveNumber)->capture_default_str();
    gen_calib->add_option("--columns", c_columns)->check(CLI::PositiveNumber)->capture_default_str();
    gen_calib->add_flag("--shifted", c_shifted, "Draw from the shifted covariance");
    gen_calib->add_option("--seed", c_seed)->capture_default_str();
    gen_calib->add_option("--out", c_out)->required();

    // factorize
    std::string f_in, f_out;
    std::size_t f_rank = 0;
    double f_tol = 1e-10;
    auto* fac = app.add_subcommand("factorize", "Build a PIFA layer from a rank-r matrix");
    fac->add_option("--in", f_in, "Input matrix (.pft)")->required();
    fac->add_option("--rank", f_rank)->required()->check(CLI::PositiveNumber);
    fac->add_option("--tol", f_tol, "Rank tolerance relative to the first pivot")->capture_default_str();
    fac->add_option("--out", f_out, "Output layer (.pifl)")->required();

    // inspect
    std::string i_in;
    auto* ins = app.add_subcommand("inspect", "Describe a .pft, .pifl or network manifest");
    ins->add_option("--in", i_in)->required();

    // reconstruct
    std::string r_w, r_calib, r_calib_dense, r_out, r_update = "both", r_counting = "svd";
    std::optional<std::size_t> r_rank;
    std::optional<double> r_density;
    double r_lambda = 0.25, r_alpha = 0.001;
    auto* rec = app.add_subcommand("reconstruct", "Whitened prune and online reconstruction of one layer");
    rec->add_option("--w", r_w, "Weight matrix (.pft)")->required();
    rec->add_option("--calib", r_calib, "Low-rank-flow inputs X_u (.pft)")->required();
    rec->add_option("--calib-dense", r_calib_dense, "Dense-flow inputs X_o (.pft); defaults to --calib");
    auto* rank_opt = rec->add_option("--rank", r_rank)->check(CLI::PositiveNumber);
    rec->add_option("--density", r_density)->excludes(rank_opt);
    rec->add_option("--counting", r_counting, "Rank accounting for --density")
        ->check(CLI::IsMember({"svd", "pifa"}))
        ->capture_default_str();
    rec->add_option("--lambda", r_lambda)->check(CLI::Range(0.0, 1.0))->capture_default_str();
    rec->add_option("--alpha", r_alpha)->check(CLI::NonNegativeNumber)->capture_default_str();
    rec->add_option("--update", r_update)->check(CLI::IsMember(kUpdates))->capture_default_str();
    rec->add_option("--out", r_out, "Output directory")->required();

    // compress
    std::string k_model, k_calib, k_mode = "mpifa", k_flow = "compressed", k_update = "both", k_out;
    double k_density = 0.5, k_lambda = 0.25, k_alpha = 0.001;
    std::vector<std::string> k_types;
    std::vector<double> k_layers;
    std::size_t k_chunk = 32;
    std::uint64_t k_seed = 0;
    auto* cmp = app.add_subcommand("compress", "Compress a dense network");
    cmp->add_option("--model", k_model, "Network manifest")->required();
    cmp->add_option("--calib", k_calib, "Calibration inputs (.pft)")->required();
    cmp->add_option("--density", k_density)->check(CLI::Range(0.0, 1.0))->capture_default_str();
    cmp->add_option("--lambda", k_lambda)->check(CLI::Range(0.0, 1.0))->capture_default_str();
    cmp->add_option("--alpha", k_alpha)->check(CLI::NonNegativeNumber)->capture_default_str();
    cmp->add_option("--mode", k_mode)->check(CLI::IsMember(kModes))->capture_default_str();
    cmp->add_option("--flow", k_flow)->check(CLI::IsMember(kFlows))->capture_default_str();
    cmp->add_option("--update", k_update)->check(CLI::IsMember(kUpdates))->capture_default_str();
    cmp->add_option("--type-density", k_types, "Per module type, tag=value")->delimiter(',');
    cmp->add_option("--layer-densities", k_layers, "Per-layer density fractions")->delimiter(',');
    cmp->add_option("--chunk", k_chunk, "Calibration columns per accumulator update")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    cmp->add_option("--seed", k_seed, "Recorded for replay; compression itself is deterministic")
        ->capture_default_str();
    cmp->add_option("--out", k_out, "Output directory")->required();

    // bench
    BenchSuite suite;
    std::string b_dtype = "f32", b_out, b_json;
    auto* ben = app.add_subcommand("bench", "Time dense, lowrank and pifa layers");
    ben->add_option("--dims", suite.dims)->delimiter(',')->capture_default_str();
    ben->add_option("--densities", suite.densities)->delimiter(',')->capture_default_str();
    ben->add_option("--dtype", b_dtype)->check(CLI::IsMember({"f32", "f64"}))->capture_default_str();
    ben->add_option("--batch", suite.batch)->capture_default_str();
    ben->add_option("--trials", suite.trials, "At least 9")->capture_default_str();
    ben->add_option("--warmups", suite.warmups, "At least 3")->capture_default_str();
    ben->add_option("--seed", suite.seed)->capture_default_str();
    ben->add_option("--out", b_out, "CSV output")->required();
    ben->add_option("--json", b_json, "JSON mirror of the CSV");

    // eval
    std::string e_a, e_b, e_probes, e_out;
    auto* ev = app.add_subcommand("eval", "Compare two networks on probe inputs");
    ev->add_option("--a", e_a, "Reference network manifest")->required();
    ev->add_option("--b", e_b, "Candidate network manifest")->required();
    ev->add_option("--probes", e_probes, "Probe inputs (.pft)")->required();
    ev->add_option("--out", e_out, "Report (.json)")->required();

    // sweep
    auto* sw = app.add_subcommand("sweep", "Mix-ratio and calibration-size sweeps");
    sw->require_subcommand(1);
    std::string s_model, s_calib, s_probes, s_mode = "mpifa", s_flow = "compressed", s_out;
    double s_density = 0.5, s_alpha = 0.001;
    std::vector<double> s_lambdas{0.0, 0.1, 0.25, 0.5, 0.75, 1.0};
    auto* sw_l = sw->add_subcommand("lambda", "Compress at several mix ratios");
    sw_l->add_option("--model", s_model)->required();
    sw_l->add_option("--calib", s_calib)->required();
    sw_l->add_option("--probes", s_probes)->required();
    sw_l->add_option("--density", s_density)->check(CLI::Range(0.0, 1.0))->capture_default_str();
    sw_l->add_option("--alpha", s_alpha)->check(CLI::NonNegativeNumber)->capture_default_str();
    sw_l->add_option("--lambdas", s_lambdas)->delimiter(',')->check(CLI::Range(0.0, 1.0))->capture_default_str();
    sw_l->add_option("--mode", s_mode)->check(CLI::IsMember({"mpifa", "w+m"}))->capture_default_str();
    sw_l->add_option("--flow", s_flow)->check(CLI::IsMember(kFlows))->capture_default_str();
    sw_l->add_option("--out", s_out, "CSV output")->required();

    std::string q_model, q_w, q_calib, q_out;
    std::size_t q_layer = 0, q_rank = 0;
    double q_alpha = 0.001;
    std::vector<std::size_t> q_samples{16, 32, 64, 128, 256, 512};
    auto* sw_c = sw->add_subcommand("calib", "Condition numbers against calibration size");
    auto* q_model_opt = sw_c->add_option("--model", q_model, "Network manifest (with --layer)");
    sw_c->add_option("--w", q_w, "Weight matrix (.pft)")->excludes(q_model_opt);
    sw_c->add_option("--layer", q_layer)->capture_default_str();
    sw_c->add_option("--calib", q_calib, "Calibration inputs (.pft)")->required();
    sw_c->add_option("--rank", q_rank)->required()->check(CLI::PositiveNumber);
    sw_c->add_option("--samples", q_samples)->delimiter(',')->capture_default_str();
    sw_c->add_option("--alpha", q_alpha)->check(CLI::NonNegativeNumber)->capture_default_str();
    sw_c->add_option("--out", q_out, "CSV output")->required();

    try {
        std::vector<std::string> args = expand_config(argc, argv, ctx.config_path);
        std::reverse(args.begin(), args.end());
        app.parse(args);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code(e.kind());
    }

    try {
        configure_threads_from_env();
        if (threads > 0) set_num_threads(threads);

        if (gen_net->parsed()) {
            ctx = {"generate network", ctx.config_path, gen_net};
            ToyNetworkSpec spec;
            spec.dims = g_dims;
            spec.activation = parse_activation(g_activation);
            spec.spectral_decay = g_decay;
            spec.tags = g_tags;
            spec.seed = g_seed;
            const ToyNetwork net = make_toy_network(spec);
            fs::create_directories(g_out);
            write_network(g_out, as_compressed(net), "manifest.json", ctx.manifest().dump());
            std::cout << "wrote " << (fs::path(g_out) / "manifest.json").string() << " (" << net.layers.size()
                      << " layers, " << net.parameters() << " parameters)\n";
        } else if (gen_calib->parsed()) {
            ctx = {"generate calib", ctx.config_path, gen_calib};
            const DenseMatrix x = make_calibration({c_dim, c_columns, c_shifted, c_seed});
            write_pft(fs::path(c_out), x);
            write_run_manifest(c_out, ctx);
            std::cout << "wrote " << c_out << " (" << x.rows() << " x " << x.cols() << ")\n";
        } else if (fac->parsed()) {
            ctx = {"factorize", ctx.config_path, fac};
            const DenseMatrix w = load_matrix(f_in);
            PifaBuildOptions options;
            options.rank_tol = f_tol;
            PifaBuildReport report;
            const PifaLayer layer = pifa_build(w, f_rank, options, &report);
            write_pifa(fs::path(f_out), layer);
            const std::uint64_t params = pifa_param_count(layer.m, layer.n, layer.rank());
            const std::uint64_t lowrank = lowrank_param_count(layer.m, layer.n, layer.rank());
            const std::uint64_t bytes = fs::file_size(f_out);
            const double err = relative_error(reconstruct_dense(layer), w);
            std::cout << "layer " << layer.m << " x " << layer.n << ", rank " << layer.rank() << " (detected "
                      << report.detected_rank << ")\n"
                      << "pifa parameters (r(m+n) - r^2 + r): " << params << '\n'
                      << "lowrank parameters (r(m+n)): " << lowrank << '\n'
                      << "dense parameters (mn): " << layer.m * layer.n << '\n'
                      << "measured bytes: " << bytes << '\n'
                      << "relative reconstruction error: " << err << '\n';
            write_run_manifest(f_out, ctx,
                               {{"m", layer.m},
                                {"n", layer.n},
                                {"rank", layer.rank()},
                                {"detected_rank", report.detected_rank},
                                {"pifa_param_count", params},
                                {"lowrank_param_count", lowrank},
                                {"measured_bytes", bytes},
                                {"used_qr_fallback", report.used_qr_fallback},
                                {"relative_error", err}});
        } else if (ins->parsed()) {
            ctx = {"inspect", ctx.config_path, ins};
            std::ifstream in(i_in, std::ios::binary);
            if (!in) throw IoError("cannot open " + i_in);
            char magic[4] = {};
            in.read(magic, 4);
            in.close();
            json info;
            if (std::memcmp(magic, "PFT1", 4) == 0) {
                const DenseMatrix m = load_matrix(i_in);
                info = {{"type", "pft"}, {"rows", m.rows()}, {"cols", m.cols()}, {"frobenius", frobenius_norm(m)}};
            } else if (std::memcmp(magic, "PIFL", 4) == 0) {
                const PifaLayer l = read_pifa(fs::path(i_in));
                info = {{"type", "pifl"},
                        {"m", l.m},
                        {"n", l.n},
                        {"rank", l.rank()},
                        {"pivot_indices", l.pivot_indices},
                        {"pifa_param_count", pifa_param_count(l.m, l.n, l.rank())},
                        {"lowrank_param_count", lowrank_param_count(l.m, l.n, l.rank())}};
            } else {
                const CompressedNetwork net = read_network(i_in);
                json layers = json::array();
                for (std::size_t i = 0; i < net.layers.size(); ++i) {
                    layers.push_back({{"kind", layer_kind(net.layers[i])},
                                      {"m", layer_rows(net.layers[i])},
                                      {"n", layer_cols(net.layers[i])},
                                      {"parameters", layer_parameters(net.layers[i])},
                                      {"method", net.provenance[i].method},
                                      {"rank", net.provenance[i].rank}});
                }
                info = {{"type", "network"},
                        {"activation", activation_name(net.activation)},
                        {"layers", layers},
                        {"stored_parameters", net.stored_parameters()},
                        {"original_parameters", net.original_parameters()},
                        {"density", static_cast<double>(net.stored_parameters()) /
                                        static_cast<double>(net.original_parameters())}};
            }
            info["bytes"] = fs::file_size(i_in);
            std::cout << info.dump(2) << '\n';
        } else if (rec->parsed()) {
            ctx = {"reconstruct", ctx.config_path, rec};
            const DenseMatrix w = load_matrix(r_w);
            const DenseMatrix x_u = load_matrix(r_calib);
            const DenseMatrix x_o = r_calib_dense.empty() ? x_u : load_matrix(r_calib_dense);
            std::size_t rank = 0;
            if (r_rank) {
                rank = *r_rank;
            } else if (r_density) {
                rank = density_to_rank(w.rows(), w.cols(), {*r_density, parse_counting_mode(r_counting)});
            } else {
                throw ValidationError("reconstruct needs --rank or --density");
            }
            const ReconstructionConfig cfg = reconstruction_config(r_lambda, r_alpha, r_update);
            CalibrationAccumulator acc(w.rows(), w.cols(), cfg.lambda);
            acc.accumulate(w, x_o, x_u);
            const LowRankFactors pruned = whitened_svd_prune(w, acc.xxt(), rank);
            const ReconstructionResult result = reconstruct_pair(acc, pruned, w, cfg);

            DenseMatrix target = matmul(w, x_o);
            if (cfg.lambda < 1.0) target = cfg.lambda * target + (1.0 - cfg.lambda) * matmul(w, x_u);
            const double before = frobenius_norm(target - pruned.forward(x_u));
            const double after = frobenius_norm(target - result.factors.forward(x_u));

            fs::create_directories(r_out);
            write_pft(fs::path(r_out) / "u.pft", result.factors.u);
            write_pft(fs::path(r_out) / "vt.pft", result.factors.vt);
            const json summary = {{"rank", rank},
                                  {"samples", acc.samples()},
                                  {"objective_before", before},
                                  {"objective_after", after},
                                  {"conditions", conditions_json(result.report)}};
            write_json(fs::path(r_out) / "report.json", summary);
            write_run_manifest(r_out, ctx, summary);
            std::cout << "rank " << rank << ": objective " << before << " -> " << after << '\n';
        } else if (cmp->parsed()) {
            ctx = {"compress", ctx.config_path, cmp};
            const ToyNetwork net = as_toy(read_network(k_model));
            const DenseMatrix calib = load_matrix(k_calib);
            const DensityAllocation alloc = build_allocation(net, k_density, k_types, k_layers);
            CompressOptions options;
            options.method = parse_method(k_mode);
            options.flow = parse_flow(k_flow);
            options.reconstruction = reconstruction_config(k_lambda, k_alpha, k_update);
            options.chunk_columns = k_chunk;
            const CompressedNetwork out = compress_network(net, calib, alloc, options);

            const double budget = k_density * static_cast<double>(net.parameters());
            json layers = json::array();
            for (std::size_t i = 0; i < out.layers.size(); ++i) {
                const auto& p = out.provenance[i];
                layers.push_back({{"layer", i},
                                  {"tag", p.tag},
                                  {"kind", layer_kind(out.layers[i])},
                                  {"rank", p.rank},
                                  {"target_density", p.target_density},
                                  {"parameters", p.parameters},
                                  {"original_parameters", p.original_parameters},
                                  {"conditions", conditions_json(p.conditions)}});
            }
            const json summary = {
                {"stored_parameters", out.stored_parameters()},
                {"original_parameters", out.original_parameters()},
                {"density", static_cast<double>(out.stored_parameters()) /
                                static_cast<double>(out.original_parameters())},
                {"budget_parameters", budget},
                {"within_budget", static_cast<double>(out.stored_parameters()) <= budget},
                {"density_scope", "linear layers only"},
                {"layers", layers}};
            fs::create_directories(k_out);
            json run = ctx.manifest(summary);
            write_network(k_out, out, "manifest.json", run.dump());
            write_json(fs::path(k_out) / "report.json", summary);
            std::cout << "compressed " << out.layers.size() << " layers: " << out.stored_parameters() << " / "
                      << out.original_parameters() << " parameters\n";
        } else if (ben->parsed()) {
            ctx = {"bench", ctx.config_path, ben};
            suite.dtype = b_dtype == "f32" ? DType::f32 : DType::f64;
            suite.threads = threads;
            const BenchRun run = run_bench(suite);
            std::ofstream csv(b_out);
            if (!csv) throw IoError("cannot write " + b_out);
            write_bench_csv(csv, run.records);
            if (!b_json.empty()) {
                std::ofstream js(b_json);
                if (!js) throw IoError("cannot write " + b_json);
                write_bench_json(js, run.records);
            }
            json skipped = json::array();
            for (const auto& s : run.skipped) {
                std::cerr << "skipped d=" << s.dim << " density=" << s.density << ": " << s.reason << '\n';
                skipped.push_back({{"dim", s.dim}, {"density", s.density}, {"reason", s.reason}});
            }
            write_run_manifest(b_out, ctx, {{"records", run.records.size()}, {"skipped", skipped}});
            write_bench_csv(std::cout, run.records);
        } else if (ev->parsed()) {
            ctx = {"eval", ctx.config_path, ev};
            const CompressedNetwork a = read_network(e_a);
            const CompressedNetwork b = read_network(e_b);
            const DenseMatrix probes = load_matrix(e_probes);
            const json report = evaluation_json(evaluate(a, b, probes));
            write_json(e_out, report);
            write_run_manifest(e_out, ctx);
            std::cout << report.dump(2) << '\n';
        } else if (sw_l->parsed()) {
            ctx = {"sweep lambda", ctx.config_path, sw_l};
            const ToyNetwork net = as_toy(read_network(s_model));
            const DenseMatrix calib = load_matrix(s_calib);
            const DenseMatrix probes = load_matrix(s_probes);
            CompressOptions base;
            base.method = parse_method(s_mode);
            base.flow = parse_flow(s_flow);
            base.reconstruction.alpha = s_alpha;
            const auto rows = lambda_sweep(net, calib, probes, DensityAllocation::uniform(s_density, net.layers.size()),
                                           s_lambdas, base);
            write_lambda_sweep_csv(s_out, rows);
            write_run_manifest(s_out, ctx);
            std::ifstream back(s_out);
            std::cout << back.rdbuf();
        } else if (sw_c->parsed()) {
            ctx = {"sweep calib", ctx.config_path, sw_c};
            DenseMatrix w;
            if (!q_w.empty()) {
                w = load_matrix(q_w);
            } else if (!q_model.empty()) {
                const ToyNetwork net = as_toy(read_network(q_model));
                if (q_layer >= net.layers.size()) throw ValidationError("--layer out of range");
                w = net.layers[q_layer];
            } else {
                throw ValidationError("sweep calib needs --w or --model");
            }
            const auto rows = condition_sweep(w, load_matrix(q_calib), q_rank, q_samples, q_alpha);
            write_condition_sweep_csv(q_out, rows);
            write_run_manifest(q_out, ctx);
            std::ifstream back(q_out);
            std::cout << back.rdbuf();
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code(e.kind());
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 4;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "error: malformed JSON: " << e.what() << '\n';
        return 4;
    } catch (const std::bad_alloc&) {
        std::cerr << "error: out of memory\n";
        return 3;
    }
    return 0;
}
