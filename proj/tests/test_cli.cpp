#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "harness.hpp"

using namespace smcvi;
namespace fs = std::filesystem;

namespace {

const fs::path kWork = fs::temp_directory_path() / "smcvi_cli_test";

int run(const std::string& args) {
    const std::string cmd = std::string(SMCVI_CLI) + " " + args + " > " +
                            (kWork / "stdout.txt").string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

struct Workdir {
    Workdir() {
        fs::remove_all(kWork);
        fs::create_directories(kWork);
    }
};

}  // namespace

TEST_CASE("generate is deterministic and records provenance") {
    Workdir w;
    write(kWork / "c.json", R"({"model": {"kind": "lgssm", "dx": 25, "dy": 25, "c_mode": "dense"},
        "T": 10, "schedule": [[0.01, 0]]})");
    REQUIRE(run("generate --config " + (kWork / "c.json").string() + " --out " +
                (kWork / "a").string()) == 0);
    REQUIRE(run("generate --config " + (kWork / "c.json").string() + " --out " +
                (kWork / "b").string()) == 0);
    const std::string a = slurp(kWork / "a" / "data.csv");
    CHECK(a == slurp(kWork / "b" / "data.csv"));
    CHECK(slurp(kWork / "a" / "data.csv.meta.json") == slurp(kWork / "b" / "data.csv.meta.json"));
    CHECK(std::count(a.begin(), a.end(), '\n') == 11);
    CHECK(slurp(kWork / "a" / "data.csv.meta.json").find("\"C\"") != std::string::npos);
    REQUIRE(run("generate --config " + (kWork / "c.json").string() + " --seed 2 --out " +
                (kWork / "c").string()) == 0);
    CHECK(a != slurp(kWork / "c" / "data.csv"));
}

TEST_CASE("train, evaluate and plot") {
    Workdir w;
    const std::string cfg = (kWork / "c.json").string();
    write(kWork / "c.json", R"({"model": {"kind": "lgssm", "dx": 2, "dy": 2}, "T": 4, "N": 3,
        "objective": "VSMC", "schedule": [[0.01, 30]], "eval_samples": 50, "probe_every": 10,
        "probe_samples": 3, "out_dir": ")" + (kWork / "run").string() + "\"}");
    CHECK(run("train --config " + cfg) != 0);  // no dataset yet
    REQUIRE(run("generate --config " + cfg) == 0);
    REQUIRE(run("train --config " + cfg) == 0);
    const std::string first = slurp(kWork / "run" / "train_VSMC_N3.csv");
    const harness::CsvTable t = harness::read_csv(kWork / "run" / "train_VSMC_N3.csv");
    CHECK(t.header == std::vector<std::string>{"iter", "objective", "grad_norm", "grad_var",
                                               "wall_ms", "config_hash"});
    CHECK(t.rows.size() == 30);
    CHECK(t.rows[10][3] != "");
    CHECK(t.rows[11][3] == "");

    // Same config again: every column except wall time repeats.
    REQUIRE(run("train --config " + cfg) == 0);
    const harness::CsvTable t2 = harness::read_csv(kWork / "run" / "train_VSMC_N3.csv");
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        for (std::size_t c : {0u, 1u, 2u, 3u, 5u}) {
            CHECK(t.rows[i][c] == t2.rows[i][c]);
        }
    }

    REQUIRE(run("evaluate --config " + cfg + " --N 2,4,8,16 --samples 40") == 0);
    const harness::CsvTable r = harness::read_csv(kWork / "run" / "results.csv");
    CHECK(r.header.size() == 8);
    CHECK(r.rows.size() == 2 + 4);
    CHECK(r.rows.back()[*r.column("kalman")] != "");
    CHECK(r.rows[0][0] == t.rows[0][5]);

    REQUIRE(run("train --config " + cfg + " --objective VMPF-UG --warm-start " +
                (kWork / "run" / "params_VSMC_N3.json").string()) == 0);

    REQUIRE(run("plot --input " + (kWork / "run" / "train_VSMC_N3.csv").string() + " " +
                (kWork / "run" / "results.csv").string() + " --out " + (kWork / "plots").string()) == 0);
    const std::string svg = slurp(kWork / "plots" / "bound_vs_iter.svg");
    CHECK(svg.find("<polyline") != std::string::npos);
    CHECK(svg.find("log p(y)") != std::string::npos);
    CHECK(fs::exists(kWork / "plots" / "grad_variance.svg"));
    CHECK(fs::exists(kWork / "plots" / "bound_vs_N.svg"));
}

TEST_CASE("zero-iteration schedules evaluate the initial parameters") {
    Workdir w;
    const std::string cfg = (kWork / "c.json").string();
    write(kWork / "c.json", R"({"model": {"kind": "stochvol", "d": 2}, "T": 8, "N": 2,
        "schedule": [[0.01, 0]], "eval_samples": 10, "out_dir": ")" +
                                (kWork / "run").string() + "\"}");
    REQUIRE(run("generate --config " + cfg) == 0);
    REQUIRE(run("train --config " + cfg) == 0);
    CHECK(harness::read_csv(kWork / "run" / "train_VSMC_N2.csv").rows.empty());
    const harness::CsvTable r = harness::read_csv(kWork / "run" / "results.csv");
    REQUIRE(r.rows.size() == 1);
    CHECK(r.rows[0][*r.column("kalman")] == "");
}

TEST_CASE("errors give nonzero exit status") {
    Workdir w;
    write(kWork / "typo.json", R"({"model": {"kind": "lgssm"}, "NN": 4})");
    CHECK(run("generate --config " + (kWork / "typo.json").string()) != 0);
    CHECK(slurp(kWork / "stdout.txt").find("NN") != std::string::npos);
    write(kWork / "dpf.json", R"({"objective": "DPF"})");
    CHECK(run("generate --config " + (kWork / "dpf.json").string()) != 0);
    CHECK(run("verify nonsense") != 0);
    CHECK(run("frobnicate") != 0);
}

TEST_CASE("verify suites pass and report measurements") {
    Workdir w;
    CHECK(run("verify collapse") == 0);
    CHECK(run("verify unbiasedness") == 0);
    const std::string out = slurp(kWork / "stdout.txt");
    CHECK(out.find("\"check\": \"IPF L=2 N=3\"") != std::string::npos);
    CHECK(out.find("\"pass\": false") == std::string::npos);
}

TEST_CASE("plot accepts an empty table") {
    Workdir w;
    write(kWork / "empty.csv", "");
    CHECK(run("plot --input " + (kWork / "empty.csv").string() + " --out " +
              (kWork / "p").string()) == 0);
    CHECK(slurp(kWork / "p" / "bound_vs_iter.svg").find("<svg") != std::string::npos);
    write(kWork / "bad.csv", "iter,objective\n1,2,3\n");
    CHECK(run("plot --input " + (kWork / "bad.csv").string()) != 0);
}

TEST_CASE("poly_fit recovers exact coefficients") {
    std::vector<double> x, y;
    for (double n : {8.0, 16.0, 32.0, 64.0, 128.0}) {
        x.push_back(n);
        y.push_back(0.5 + 0.02 * n + 3e-4 * n * n);
    }
    const harness::PolyFit f = harness::poly_fit(x, y, 2);
    CHECK(f.coef[0] == doctest::Approx(0.5));
    CHECK(f.coef[1] == doctest::Approx(0.02));
    CHECK(f.coef[2] == doctest::Approx(3e-4));
    CHECK(f.se[2] < 1e-9);
}

TEST_CASE("svg_plot draws the reference line and handles empty input") {
    const std::string empty = harness::svg_plot({}, {"t", "x", "y", false, std::nullopt, ""});
    CHECK(empty.find("<svg") != std::string::npos);
    CHECK(empty.find("<polyline") == std::string::npos);
    const std::string svg = harness::svg_plot({{"a", {1, 2, 3}, {1e-3, 1e-2, 1e-1}}},
                                              {"t", "x", "y", true, 0.05, "ref"});
    CHECK(svg.find("ref") != std::string::npos);
    CHECK(svg.find("1e-1") != std::string::npos);
}

TEST_CASE("shipped configs parse and build") {
    std::size_t n = 0;
    for (const auto& e : fs::directory_iterator(SMCVI_CONFIGS)) {
        if (e.path().extension() != ".json") {
            continue;
        }
        CAPTURE(e.path().string());
        const ExperimentConfig c = load_config(e.path().string());
        ExperimentConfig small = c;
        small.steps = 3;
        CHECK_NOTHROW(build_problem(small, generate_dataset(small)));
        ++n;
    }
    CHECK(n >= 4);
}
