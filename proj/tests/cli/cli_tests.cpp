#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "pifa/kernels.hpp"
#include "pifa/pft.hpp"
#include "pifa/rng.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
    int code = -1;
    std::string out;
};

Result run(const std::string& args) {
    const std::string cmd = std::string(PIFA_CLI_PATH) + " " + args + " 2>&1";
    Result r;
    FILE* p = popen(cmd.c_str(), "r");
    REQUIRE(p != nullptr);
    std::array<char, 4096> buf{};
    std::size_t n;
    while ((n = std::fread(buf.data(), 1, buf.size(), p)) > 0) r.out.append(buf.data(), n);
    const int status = pclose(p);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

fs::path workdir() {
    static const fs::path dir = [] {
        auto d = fs::temp_directory_path() / "pifa_cli_tests";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

std::string path(const std::string& name) { return (workdir() / name).string(); }

std::string slurp(const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_rank_matrix(const std::string& p, std::size_t m, std::size_t n, std::size_t r, std::uint64_t seed) {
    pifa::Rng rng(seed);
    pifa::write_pft(fs::path(p), pifa::matmul(rng.gaussian(m, r), rng.gaussian(r, n)));
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("factorize reports counts and rejects excess rank") {
    write_rank_matrix(path("w.pft"), 64, 48, 16, 1);
    const Result ok = run("factorize --in " + path("w.pft") + " --rank 16 --out " + path("w.pifl"));
    CHECK(ok.code == 0);
    CHECK(ok.out.find("1552") != std::string::npos);
    CHECK(fs::exists(path("w.pifl.run.json")));

    const Result bad = run("factorize --in " + path("w.pft") + " --rank 20 --out " + path("bad.pifl"));
    CHECK(bad.code == 3);
    CHECK(bad.out.find("16") != std::string::npos);

    const Result ins = run("inspect --in " + path("w.pifl"));
    REQUIRE(ins.code == 0);
    const auto j = nlohmann::json::parse(ins.out);
    CHECK(j["type"] == "pifl");
    CHECK(j["rank"] == 16);
    CHECK(j["pifa_param_count"] == 1552);
}

TEST_CASE("exit codes") {
    CHECK(run("factorize --in " + path("missing.pft") + " --rank 2 --out " + path("x.pifl")).code == 4);
    {
        std::ofstream(path("junk.pft")) << "not a matrix";
    }
    CHECK(run("inspect --in " + path("junk.pft")).code == 4);
    CHECK(run("compress --model m.json").code == 2);
    CHECK(run("no-such-command").code == 2);
    CHECK(run("bench --trials 3 --out " + path("b.csv")).code == 2);
}

TEST_CASE("generate is deterministic") {
    CHECK(run("generate network --dims 16,24,8 --seed 3 --out " + path("net_a")).code == 0);
    CHECK(run("generate network --dims 16,24,8 --seed 3 --out " + path("net_b")).code == 0);
    CHECK(slurp(path("net_a/layer_000.pft")) == slurp(path("net_b/layer_000.pft")));
    CHECK(run("generate calib --dim 16 --columns 40 --seed 4 --out " + path("c1.pft")).code == 0);
    CHECK(run("generate calib --dim 16 --columns 40 --seed 4 --out " + path("c2.pft")).code == 0);
    CHECK(slurp(path("c1.pft")) == slurp(path("c2.pft")));
}

TEST_CASE("compress, evaluate and sweep") {
    REQUIRE(run("generate network --dims 16,24,8 --seed 5 --out " + path("net")).code == 0);
    REQUIRE(run("generate calib --dim 16 --columns 96 --seed 6 --out " + path("calib.pft")).code == 0);
    REQUIRE(run("generate calib --dim 16 --columns 32 --seed 7 --out " + path("probe.pft")).code == 0);
    const Result c = run("compress --model " + path("net/manifest.json") + " --calib " + path("calib.pft") +
                         " --density 0.6 --out " + path("cnet"));
    REQUIRE(c.code == 0);
    const auto report = nlohmann::json::parse(slurp(path("cnet/report.json")));
    CHECK(report.contains("layers"));
    const Result ins = run("inspect --in " + path("cnet/manifest.json"));
    REQUIRE(ins.code == 0);
    CHECK(nlohmann::json::parse(ins.out)["density"].get<double>() <= 0.6);

    CHECK(run("eval --a " + path("net/manifest.json") + " --b " + path("cnet/manifest.json") + " --probes " +
              path("probe.pft") + " --out " + path("eval.json"))
              .code == 0);
    CHECK(nlohmann::json::parse(slurp(path("eval.json"))).contains("output_mse"));

    CHECK(run("compress --model " + path("net/manifest.json") + " --calib " + path("calib.pft") +
              " --lambda 1.5 --out " + path("cnet2"))
              .code == 2);

    const Result sl = run("sweep lambda --model " + path("net/manifest.json") + " --calib " + path("calib.pft") +
                          " --probes " + path("probe.pft") + " --lambdas 0,0.5 --out " + path("sweep.csv"));
    CHECK(sl.code == 0);
    CHECK(sl.out.rfind("lambda,density,output_mse,relative_frobenius,weight_change", 0) == 0);
    const Result sc = run("sweep calib --model " + path("net/manifest.json") + " --calib " + path("calib.pft") +
                          " --rank 4 --samples 16,32,96 --out " + path("cond.csv"));
    CHECK(sc.code == 0);
    CHECK(sc.out.rfind("samples,cond_vxxv,cond_xxt,cond_xxt_alpha", 0) == 0);
}

TEST_CASE("config file fills missing flags") {
    {
        std::ofstream(path("cfg.json")) << R"({"dims": [16, 8], "seed": 9, "out": ")" << path("cfgnet") << "\"}";
    }
    const Result r = run("generate network --config " + path("cfg.json"));
    CHECK(r.code == 0);
    const auto manifest = nlohmann::json::parse(slurp(path("cfgnet/manifest.json")));
    CHECK(manifest["run"]["config"]["seed"] == 9);
    CHECK(manifest["run"]["config_file"] == path("cfg.json"));
}

TEST_CASE("bench writes the fixed schema") {
    const Result r = run("bench --dims 32 --densities 0.5 --batch 8 --out " + path("b.csv") + " --json " +
                         path("b.json"));
    REQUIRE(r.code == 0);
    std::istringstream in(slurp(path("b.csv")));
    std::string header;
    std::getline(in, header);
    CHECK(header ==
          "kind,m,n,r,b,dtype,threads,trials,median_ns,p10_ns,p90_ns,flops_model,bytes_model,bytes_measured,"
          "speedup_vs_dense");
    CHECK(nlohmann::json::parse(slurp(path("b.json"))).size() == 3);
}

}
