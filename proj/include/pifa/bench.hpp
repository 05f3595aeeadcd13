#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "pifa/cost_model.hpp"
#include "pifa/pft.hpp"

namespace pifa {

struct BenchSuite {
    std::vector<std::size_t> dims{512};          // square layers d x d
    std::vector<double> densities{0.5};          // PIFA-mode densities; lowrank gets the svd-mode rank at the same density
    DType dtype = DType::f32;
    std::size_t batch = 256;
    std::size_t trials = 9;
    std::size_t warmups = 3;
    int threads = 0;  // 0 keeps the current setting
    std::uint64_t seed = 0;

    // trials >= 9, warmups >= 3, non-empty positive dims, densities in (0, 1], batch >= 1.
    void validate() const;
};

struct BenchRecord {
    std::string kind;
    std::size_t m = 0, n = 0, r = 0, b = 0;
    double density = 1.0;
    std::string dtype;
    int threads = 1;
    std::size_t trials = 0;
    double median_ns = 0.0, p10_ns = 0.0, p90_ns = 0.0;
    std::uint64_t flops_model = 0;
    std::uint64_t bytes_model = 0;
    std::uint64_t bytes_measured = 0;
    double speedup_vs_dense = 1.0;
    std::uint64_t output_digest = 0;  // FNV-1a over the output bytes; equal seeds give equal digests
};

struct BenchSkip {
    std::size_t dim = 0;
    double density = 0.0;
    std::string reason;
};

struct BenchRun {
    std::vector<BenchRecord> records;
    std::vector<BenchSkip> skipped;
};

// Per dim: one dense record, then lowrank and pifa records per density. All
// kinds see the same seeded input batch. Allocation failures are skipped with
// the reason recorded.
BenchRun run_bench(const BenchSuite& suite);

// Fixed schema:
// kind,m,n,r,b,dtype,threads,trials,median_ns,p10_ns,p90_ns,flops_model,bytes_model,bytes_measured,speedup_vs_dense
void write_bench_csv(std::ostream& out, const std::vector<BenchRecord>& records);
// Array of objects with the CSV field names.
void write_bench_json(std::ostream& out, const std::vector<BenchRecord>& records);

}  // namespace pifa
