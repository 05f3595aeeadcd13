#include "pifa/bench.hpp"

#include <algorithm>
#include <chrono>
#include <functional>
#include <cmath>
#include <new>
#include <numeric>
#include <ostream>

#include <json.hpp>

#include "pifa/kernels.hpp"
#include "pifa/rng.hpp"

namespace pifa {

void BenchSuite::validate() const {
    if (trials < 9) throw ValidationError("bench: trials must be at least 9 (got " + std::to_string(trials) + ")");
    if (warmups < 3) throw ValidationError("bench: warmups must be at least 3");
    if (batch == 0) throw ValidationError("bench: batch must be positive");
    if (dims.empty()) throw ValidationError("bench: no dims given");
    for (std::size_t d : dims)
        if (d == 0) throw ValidationError("bench: dims must be positive");
    for (double density : densities)
        if (!(density > 0.0 && density <= 1.0)) throw ValidationError("bench: densities must lie in (0, 1]");
    if (threads < 0) throw ValidationError("bench: threads must be non-negative");
}

namespace {

struct Timing {
    double median = 0.0, p10 = 0.0, p90 = 0.0;
};

double quantile(const std::vector<double>& sorted, double q) {
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

Timing summarize(std::vector<double> ns) {
    std::sort(ns.begin(), ns.end());
    return {quantile(ns, 0.5), quantile(ns, 0.1), quantile(ns, 0.9)};
}

// Trials are interleaved round-robin across kernels so slow drifts in machine
// load hit every kind alike and the speedup ratios stay comparable.
std::vector<Timing> time_interleaved(const std::vector<std::function<void()>>& kernels, std::size_t warmups,
                                     std::size_t trials) {
    for (const auto& k : kernels)
        for (std::size_t i = 0; i < warmups; ++i) k();
    std::vector<std::vector<double>> ns(kernels.size());
    for (std::size_t t = 0; t < trials; ++t) {
        for (std::size_t i = 0; i < kernels.size(); ++i) {
            const auto t0 = std::chrono::steady_clock::now();
            kernels[i]();
            const auto t1 = std::chrono::steady_clock::now();
            ns[i].push_back(std::chrono::duration<double, std::nano>(t1 - t0).count());
        }
    }
    std::vector<Timing> out;
    for (auto& v : ns) out.push_back(summarize(std::move(v)));
    return out;
}

template <typename T>
std::uint64_t digest(const Matrix<T>& m) {
    std::uint64_t h = 1469598103934665603ull;
    const auto* bytes = reinterpret_cast<const unsigned char*>(m.data());
    for (std::size_t i = 0; i < m.size() * sizeof(T); ++i) {
        h ^= bytes[i];
        h *= 1099511628211ull;
    }
    return h;
}

template <typename T>
Matrix<T> gaussian_as(Rng& rng, std::size_t rows, std::size_t cols, double stddev) {
    return matrix_cast<T>(rng.gaussian(rows, cols, stddev));
}

// Timing does not depend on the values, so the PIFA layer is drawn directly:
// random pivot set, Gaussian W_p and C.
template <typename T>
BasicPifaLayer<T> random_pifa(Rng& rng, std::size_t m, std::size_t n, std::size_t r) {
    std::vector<std::size_t> perm(m);
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = m; i > 1; --i) std::swap(perm[i - 1], perm[rng.index(i)]);
    BasicPifaLayer<T> layer;
    layer.m = m;
    layer.n = n;
    layer.pivot_indices.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(r));
    layer.nonpivot_indices.assign(perm.begin() + static_cast<std::ptrdiff_t>(r), perm.end());
    std::sort(layer.nonpivot_indices.begin(), layer.nonpivot_indices.end());
    layer.w_p = gaussian_as<T>(rng, r, n, 1.0 / std::sqrt(static_cast<double>(n)));
    layer.c = gaussian_as<T>(rng, m - r, r, 1.0 / std::sqrt(static_cast<double>(r)));
    layer.validate();
    return layer;
}

template <typename T>
void run_dim(const BenchSuite& suite, std::size_t d, int threads, BenchRun& run) {
    const std::size_t b = suite.batch;
    const std::string dtype = dtype_name(dtype_of<T>());
    Rng rng(suite.seed ^ (0x9e3779b97f4a7c15ull * (d + 1)));

    auto make_record = [&](LayerKind kind, std::size_t r, double density) {
        BenchRecord rec;
        rec.kind = std::string(layer_kind_name(kind));
        rec.m = rec.n = d;
        rec.r = r;
        rec.b = b;
        rec.density = density;
        rec.dtype = dtype;
        rec.threads = threads;
        rec.trials = suite.trials;
        rec.flops_model = flops({kind, d, d, r, b});
        rec.bytes_model = memory_model(kind, d, d, r, sizeof(T));
        return rec;
    };

    // Everything for this dim is built first, then timed together.
    struct Case {
        BenchRecord record;
        std::function<void()> kernel;
        std::function<std::uint64_t()> output;
    };
    std::vector<Case> cases;
    Matrix<T> x, w, y_dense;
    std::vector<Matrix<T>> us, vts, ts, ys;
    std::vector<BasicPifaLayer<T>> layers;
    std::vector<Matrix<T>> outs;
    try {
        x = gaussian_as<T>(rng, d, b, 1.0);
        w = gaussian_as<T>(rng, d, d, 1.0 / std::sqrt(static_cast<double>(d)));
        y_dense = Matrix<T>(d, b);
    } catch (const std::bad_alloc&) {
        run.skipped.push_back({d, 1.0, "allocation failed for dense layer and inputs"});
        return;
    }
    const std::size_t n_dens = suite.densities.size();
    us.reserve(n_dens), vts.reserve(n_dens), ts.reserve(n_dens), ys.reserve(n_dens);
    layers.reserve(n_dens), outs.reserve(n_dens);

    BenchRecord dense = make_record(LayerKind::dense, d, 1.0);
    dense.bytes_measured = measured_bytes(w);
    cases.push_back({dense, [&] { gemm(w, x, y_dense); }, [&] { return digest(y_dense); }});

    for (double density : suite.densities) {
        try {
            const std::size_t r_lr = density_to_rank(d, d, {density, CountingMode::svd_lowrank});
            Matrix<T> u = gaussian_as<T>(rng, d, r_lr, 1.0 / std::sqrt(static_cast<double>(r_lr)));
            Matrix<T> vt = gaussian_as<T>(rng, r_lr, d, 1.0 / std::sqrt(static_cast<double>(d)));
            Matrix<T> t(r_lr, b), y(d, b);
            const std::size_t r_p = density_to_rank(d, d, {density, CountingMode::pifa});
            BasicPifaLayer<T> layer = random_pifa<T>(rng, d, d, r_p);

            us.push_back(std::move(u));
            vts.push_back(std::move(vt));
            ts.push_back(std::move(t));
            ys.push_back(std::move(y));
            layers.push_back(std::move(layer));
            outs.emplace_back();
            const std::size_t k = us.size() - 1;

            BenchRecord lr = make_record(LayerKind::lowrank, r_lr, density);
            lr.bytes_measured = measured_bytes(us[k]) + measured_bytes(vts[k]);
            cases.push_back({lr,
                             [&, k] {
                                 gemm(vts[k], x, ts[k]);
                                 gemm(us[k], ts[k], ys[k]);
                             },
                             [&, k] { return digest(ys[k]); }});

            BenchRecord pr = make_record(LayerKind::pifa, r_p, density);
            pr.bytes_measured = measured_bytes(layers[k]);
            cases.push_back({pr, [&, k] { outs[k] = pifa_forward(layers[k], x); }, [&, k] { return digest(outs[k]); }});
        } catch (const std::bad_alloc&) {
            run.skipped.push_back({d, density, "allocation failed"});
        }
    }

    std::vector<std::function<void()>> kernels;
    for (const auto& c : cases) kernels.push_back(c.kernel);
    const std::vector<Timing> timings = time_interleaved(kernels, suite.warmups, suite.trials);
    for (std::size_t i = 0; i < cases.size(); ++i) {
        BenchRecord rec = cases[i].record;
        rec.median_ns = timings[i].median;
        rec.p10_ns = timings[i].p10;
        rec.p90_ns = timings[i].p90;
        rec.speedup_vs_dense = timings[0].median / rec.median_ns;
        rec.output_digest = cases[i].output();
        run.records.push_back(rec);
    }
}

}  // namespace

BenchRun run_bench(const BenchSuite& suite) {
    suite.validate();
    const int previous = num_threads();
    if (suite.threads > 0) set_num_threads(suite.threads);
    const int threads = num_threads();
    BenchRun run;
    try {
        for (std::size_t d : suite.dims) {
            if (suite.dtype == DType::f32) {
                run_dim<float>(suite, d, threads, run);
            } else {
                run_dim<double>(suite, d, threads, run);
            }
        }
    } catch (...) {
        set_num_threads(previous);
        throw;
    }
    set_num_threads(previous);
    return run;
}

void write_bench_csv(std::ostream& out, const std::vector<BenchRecord>& records) {
    out << "kind,m,n,r,b,dtype,threads,trials,median_ns,p10_ns,p90_ns,flops_model,bytes_model,bytes_measured,"
           "speedup_vs_dense\n";
    const auto old_precision = out.precision(10);
    for (const auto& r : records) {
        out << r.kind << ',' << r.m << ',' << r.n << ',' << r.r << ',' << r.b << ',' << r.dtype << ',' << r.threads
            << ',' << r.trials << ',' << r.median_ns << ',' << r.p10_ns << ',' << r.p90_ns << ',' << r.flops_model
            << ',' << r.bytes_model << ',' << r.bytes_measured << ',' << r.speedup_vs_dense << '\n';
    }
    out.precision(old_precision);
}

void write_bench_json(std::ostream& out, const std::vector<BenchRecord>& records) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : records) {
        arr.push_back({{"kind", r.kind},
                       {"m", r.m},
                       {"n", r.n},
                       {"r", r.r},
                       {"b", r.b},
                       {"dtype", r.dtype},
                       {"threads", r.threads},
                       {"trials", r.trials},
                       {"median_ns", r.median_ns},
                       {"p10_ns", r.p10_ns},
                       {"p90_ns", r.p90_ns},
                       {"flops_model", r.flops_model},
                       {"bytes_model", r.bytes_model},
                       {"bytes_measured", r.bytes_measured},
                       {"speedup_vs_dense", r.speedup_vs_dense}});
    }
    out << arr.dump(2) << '\n';
}

}  // namespace pifa
