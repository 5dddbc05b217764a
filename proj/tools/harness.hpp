#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "smcvi/experiment.hpp"

namespace smcvi::harness {

struct Check {
    std::string name;
    double measured = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

/// One JSON object per line: {"suite", "check", "measured", "tolerance", "pass"}.
std::string check_json(const std::string& suite, const Check& c);

const std::vector<std::string>& verify_suites();
/// Runs a named suite; unknown names are std::invalid_argument.
std::vector<Check> run_suite(const std::string& suite);

std::vector<Check> suite_unbiasedness();
std::vector<Check> suite_identity();
std::vector<Check> suite_gradients();
std::vector<Check> suite_collapse();
std::vector<Check> suite_bounds();

/// Largest finite-difference error over every differentiable op at random points.
std::vector<Check> autodiff_op_checks(std::size_t trials, std::uint64_t seed);

// Benchmarks ----------------------------------------------------------------

enum class BenchModel { LGSSM, DMM };

struct BenchRow {
    std::string filter;  // "SMC" or "MPF"
    std::size_t particles = 0;
    double step_ms = 0.0;  // median over reps of wall time / T
};

struct BenchOptions {
    BenchModel model = BenchModel::DMM;
    std::vector<std::size_t> particles{8, 16, 32, 64, 128, 256, 512};
    std::size_t reps = 5;
    std::size_t steps = 10;
    bool gradients = false;
    std::uint64_t seed = 1;
};

std::vector<BenchRow> bench(const BenchOptions& opt);

/// Least squares y = sum_k coef[k] x^k for k = 0..degree, with standard errors.
struct PolyFit {
    std::vector<double> coef;
    std::vector<double> se;
};
PolyFit poly_fit(const std::vector<double>& x, const std::vector<double>& y, std::size_t degree);

struct BenchSummary {
    PolyFit mpf;  // degree 2
    PolyFit smc;  // degree 2, used to show the N^2 term is negligible
    PolyFit smc_linear;
    double mpf_t_stat = 0.0;
    /// |c N^2| / |d N| for SMC at the largest N.
    double smc_quadratic_share = 0.0;
    /// N where MPF's quadratic term overtakes its linear term.
    double crossover = 0.0;
    /// MPF / SMC step time for each N.
    std::map<std::size_t, double> ratio;
};
BenchSummary summarize_bench(const std::vector<BenchRow>& rows);

// Output ----------------------------------------------------------------------

struct Series {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
};

struct PlotOptions {
    std::string title;
    std::string x_label;
    std::string y_label;
    bool log_y = false;
    std::optional<double> reference;
    std::string reference_label = "exact";
};

std::string svg_plot(const std::vector<Series>& series, const PlotOptions& opt);

/// Header plus rows; empty files give no header.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::optional<std::size_t> column(const std::string& name) const;
};
CsvTable read_csv(const std::filesystem::path& path);

struct ResultRow {
    std::string config_hash;
    std::string objective;
    std::size_t particles = 0;
    double mean = 0.0;
    double se = 0.0;
    std::optional<double> kalman;
    double wall_ms = 0.0;
    std::uint64_t seed = 0;
};
inline constexpr const char* kResultsHeader = "config_hash,objective,N,mean,se,kalman,wall_ms,seed";
void append_result(const std::filesystem::path& path, const ResultRow& row);

}  // namespace smcvi::harness
