#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "harness.hpp"
#include "json.hpp"
#include "smcvi/dataset_io.hpp"
#include "smcvi/error.hpp"

using namespace smcvi;
namespace fs = std::filesystem;

namespace {

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
};

void add_common(CLI::App* cmd, Common& c, bool needs_config = true) {
    auto* opt = cmd->add_option("--config", c.config, "experiment config (JSON)");
    if (needs_config) {
        opt->required()->check(CLI::ExistingFile);
    }
    cmd->add_option("--seed", c.seed,
                    cmd->get_name() == "generate" ? "override the config's data_seed"
                                                  : "override the config seed");
    cmd->add_option("--out", c.out, "output directory (default: the config's out_dir)");
}

ExperimentConfig load(const Common& c, bool data_seed) {
    ExperimentConfig cfg = load_config(c.config);
    if (c.seed) {
        (data_seed ? cfg.data_seed : cfg.seed) = *c.seed;
    }
    if (!c.out.empty()) {
        cfg.out_dir = c.out;
    }
    fs::create_directories(cfg.out_dir);
    return cfg;
}

std::string run_tag(const ExperimentConfig& cfg) {
    return to_string(cfg.objective) + "_N" + std::to_string(cfg.particles);
}

fs::path data_path(const ExperimentConfig& cfg) { return fs::path(cfg.out_dir) / "data.csv"; }

Dataset load_data(const ExperimentConfig& cfg) {
    const fs::path p = data_path(cfg);
    if (!fs::exists(p)) {
        throw std::runtime_error("no dataset at " + p.string() + "; run `generate` first");
    }
    return read_dataset(p);
}

void write_with_hash(const std::vector<TrainRecord>& records, const fs::path& path,
                     const std::string& hash) {
    write_train_csv(records, path);
    std::ifstream in(path);
    std::stringstream body;
    std::string line;
    bool header = true;
    while (std::getline(in, line)) {
        body << line << ',' << (header ? "config_hash" : hash) << '\n';
        header = false;
    }
    in.close();
    std::ofstream(path) << body.str();
}

harness::ResultRow evaluate_row(const ExperimentConfig& cfg, const Problem& p,
                                std::size_t samples) {
    const auto t0 = std::chrono::steady_clock::now();
    const BoundEstimate b = bound_estimate(config_objective(cfg), p, samples, cfg.seed);
    harness::ResultRow row;
    row.config_hash = config_hash(cfg);
    row.objective = to_string(cfg.objective);
    row.particles = cfg.particles;
    row.mean = b.mean;
    row.se = b.se;
    row.kalman = exact_loglik(cfg, p.data);
    row.wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    row.seed = cfg.seed;
    return row;
}

int cmd_generate(const Common& c) {
    const ExperimentConfig cfg = load(c, true);
    const Dataset data = generate_dataset(cfg);
    write_dataset(data, data_path(cfg));
    std::ofstream(fs::path(cfg.out_dir) / "config.json") << canonical_json(cfg) << '\n';
    std::printf("wrote %s (%zu steps x %zu) config_hash=%s\n", data_path(cfg).c_str(),
                data.steps(), data.obs_dim(), config_hash(cfg).c_str());
    return 0;
}

int cmd_train(const Common& c, const std::string& objective, std::optional<std::size_t> n,
              const std::string& warm_start) {
    ExperimentConfig cfg = load(c, false);
    if (!objective.empty()) {
        cfg.objective = parse_objective(objective);
    }
    if (n) {
        cfg.particles = *n;
    }
    Problem p = build_problem(cfg, load_data(cfg));
    if (!warm_start.empty()) {
        load_params(p.params, warm_start);
    }
    TrainOptions opt;
    opt.schedule = cfg.schedule;
    opt.seed = cfg.seed;
    opt.clip = cfg.clip;
    opt.probe_every = cfg.probe_every;
    opt.probe_samples = cfg.probe_samples;
    const TrainResult r = train(config_objective(cfg), p, opt);
    const fs::path dir(cfg.out_dir);
    const std::string hash = config_hash(cfg);
    write_with_hash(r.records, dir / ("train_" + run_tag(cfg) + ".csv"), hash);
    save_params(p.params, dir / ("params_" + run_tag(cfg) + ".json"));
    if (r.tail_failures > 0) {
        std::fprintf(stderr, "implicit-gradient tail failures: %zu\n", r.tail_failures);
    }
    if (r.failure) {
        std::fprintf(stderr, "training stopped at iteration %zu: %s\n", r.failure->iter,
                     r.failure->cause.c_str());
        return 2;
    }
    const auto row = evaluate_row(cfg, p, cfg.eval_samples);
    harness::append_result(dir / "results.csv", row);
    std::printf("%s N=%zu iterations=%zu bound=%.4f se=%.4f", row.objective.c_str(),
                row.particles, r.records.size(), row.mean, row.se);
    if (row.kalman) {
        std::printf(" kalman=%.4f", *row.kalman);
    }
    std::printf(" config_hash=%s\n", hash.c_str());
    return 0;
}

int cmd_evaluate(const Common& c, const std::string& objective, std::vector<std::size_t> ns,
                 std::string params, std::optional<std::size_t> samples) {
    ExperimentConfig cfg = load(c, false);
    if (!objective.empty()) {
        cfg.objective = parse_objective(objective);
    }
    if (ns.empty()) {
        ns.push_back(cfg.particles);
    }
    const Dataset data = load_data(cfg);
    int status = 0;
    for (std::size_t n : ns) {
        ExperimentConfig run = cfg;
        run.particles = n;
        Problem p = build_problem(run, data);
        // Proposal parameters do not depend on N, so a sweep falls back to
        // the parameters trained at the config's N.
        fs::path file = params;
        if (params.empty()) {
            file = fs::path(cfg.out_dir) / ("params_" + run_tag(run) + ".json");
            if (!fs::exists(file)) {
                file = fs::path(cfg.out_dir) / ("params_" + run_tag(cfg) + ".json");
            }
        }
        if (!fs::exists(file)) {
            throw std::runtime_error("no parameter file " + file.string());
        }
        load_params(p.params, file);
        const auto row = evaluate_row(run, p, samples.value_or(cfg.eval_samples));
        harness::append_result(fs::path(cfg.out_dir) / "results.csv", row);
        std::printf("%s N=%zu bound=%.4f se=%.4f", row.objective.c_str(), n, row.mean, row.se);
        if (row.kalman) {
            const bool ok = row.mean <= *row.kalman + 3 * row.se;
            std::printf(" kalman=%.4f %s", *row.kalman, ok ? "ok" : "ABOVE EXACT + 3 SE");
            status |= ok ? 0 : 1;
        }
        std::printf("\n");
    }
    return status;
}

int cmd_verify(const std::string& suite) {
    std::vector<std::string> suites;
    if (suite == "all") {
        suites = harness::verify_suites();
    } else {
        suites.push_back(suite);
    }
    bool ok = true;
    for (const auto& s : suites) {
        for (const auto& check : harness::run_suite(s)) {
            std::cout << harness::check_json(s, check) << '\n';
            ok &= check.pass;
        }
    }
    return ok ? 0 : 1;
}

int cmd_bench(const std::string& out, harness::BenchOptions opt) {
    const auto rows = harness::bench(opt);
    fs::create_directories(out);
    std::ofstream f(fs::path(out) / "bench.csv");
    f << "filter,N,step_ms\n";
    for (const auto& r : rows) {
        f << r.filter << ',' << r.particles << ',' << r.step_ms << '\n';
    }
    const auto s = harness::summarize_bench(rows);
    nlohmann::ordered_json j;
    j["mpf_fit"] = {{"c", s.mpf.coef[2]}, {"d", s.mpf.coef[1]}, {"e", s.mpf.coef[0]},
                    {"c_se", s.mpf.se[2]}, {"c_t", s.mpf_t_stat}};
    j["smc_fit"] = {{"c", s.smc.coef[2]}, {"d", s.smc.coef[1]}, {"e", s.smc.coef[0]},
                    {"quadratic_share_at_max_N", s.smc_quadratic_share}};
    j["smc_linear_fit"] = {{"d", s.smc_linear.coef[1]}, {"e", s.smc_linear.coef[0]}};
    j["crossover_N"] = s.crossover;
    for (const auto& [n, ratio] : s.ratio) {
        j["mpf_over_smc"][std::to_string(n)] = ratio;
    }
    std::ofstream(fs::path(out) / "bench_fit.json") << j.dump(2) << '\n';
    std::cout << j.dump(2) << '\n';
    return 0;
}

std::vector<double> numbers(const harness::CsvTable& t, std::size_t col) {
    std::vector<double> v;
    for (const auto& r : t.rows) {
        v.push_back(r[col].empty() ? NAN : std::stod(r[col]));
    }
    return v;
}

int cmd_plot(const std::vector<std::string>& inputs, const std::string& out,
             std::optional<double> reference) {
    fs::create_directories(out);
    std::vector<harness::Series> bounds, variances, by_n, timing;
    std::optional<double> kalman = reference;
    for (const auto& in : inputs) {
        const harness::CsvTable t = harness::read_csv(in);
        const std::string label = fs::path(in).stem().string();
        if (t.column("iter")) {
            const auto it = numbers(t, *t.column("iter"));
            bounds.push_back({label, it, numbers(t, *t.column("objective"))});
            if (auto gv = t.column("grad_var")) {
                harness::Series s{label, {}, {}};
                const auto v = numbers(t, *gv);
                for (std::size_t i = 0; i < v.size(); ++i) {
                    if (std::isfinite(v[i])) {
                        s.x.push_back(it[i]);
                        s.y.push_back(v[i]);
                    }
                }
                variances.push_back(std::move(s));
            }
        } else if (t.column("config_hash") && t.column("mean")) {
            const auto n = numbers(t, *t.column("N"));
            const auto mean = numbers(t, *t.column("mean"));
            const auto kal = numbers(t, *t.column("kalman"));
            const std::size_t oc = *t.column("objective");
            std::map<std::string, harness::Series> per;
            for (std::size_t i = 0; i < t.rows.size(); ++i) {
                auto& s = per[t.rows[i][oc]];
                s.label = t.rows[i][oc];
                s.x.push_back(n[i]);
                s.y.push_back(mean[i]);
                if (!kalman && std::isfinite(kal[i])) {
                    kalman = kal[i];
                }
            }
            for (auto& [k, s] : per) {
                by_n.push_back(std::move(s));
            }
        } else if (t.column("step_ms")) {
            std::map<std::string, harness::Series> per;
            const auto n = numbers(t, *t.column("N"));
            const auto ms = numbers(t, *t.column("step_ms"));
            for (std::size_t i = 0; i < t.rows.size(); ++i) {
                auto& s = per[t.rows[i][0]];
                s.label = t.rows[i][0];
                s.x.push_back(n[i]);
                s.y.push_back(ms[i]);
            }
            for (auto& [k, s] : per) {
                timing.push_back(std::move(s));
            }
        } else if (!t.header.empty()) {
            throw std::runtime_error(in + ": unrecognised CSV schema");
        }
    }
    auto write = [&](const std::string& name, const std::vector<harness::Series>& s,
                     harness::PlotOptions o) {
        std::ofstream(fs::path(out) / name) << harness::svg_plot(s, o);
        std::printf("wrote %s\n", (fs::path(out) / name).c_str());
    };
    harness::PlotOptions o;
    o.title = "lower bound during training";
    o.x_label = "iteration";
    o.y_label = "log p_hat";
    o.reference = kalman;
    o.reference_label = "log p(y)";
    write("bound_vs_iter.svg", bounds, o);
    if (!variances.empty()) {
        write("grad_variance.svg", variances,
              {"mean gradient variance", "iteration", "variance", true, std::nullopt, ""});
    }
    if (!by_n.empty()) {
        o.title = "final bound vs N";
        o.x_label = "N";
        write("bound_vs_N.svg", by_n, o);
    }
    if (!timing.empty()) {
        write("bench.svg", timing, {"time per step", "N", "ms", false, std::nullopt, ""});
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Variational sequential Monte Carlo and marginal particle filter experiments"};
    app.require_subcommand(1);

    Common gen_c;
    auto* gen = app.add_subcommand("generate", "simulate a dataset for a config");
    add_common(gen, gen_c);

    Common train_c;
    std::string train_obj, warm;
    std::optional<std::size_t> train_n;
    auto* tr = app.add_subcommand("train", "train proposal (and model) parameters");
    add_common(tr, train_c);
    tr->add_option("--objective", train_obj, "IWVI, VSMC, TMC, VMPF-BG or VMPF-UG");
    tr->add_option("--N", train_n, "particles");
    tr->add_option("--warm-start", warm, "parameter file to start from")
        ->check(CLI::ExistingFile);

    Common ev_c;
    std::string ev_obj, ev_params;
    std::vector<std::size_t> ev_n;
    std::optional<std::size_t> ev_samples;
    auto* ev = app.add_subcommand("evaluate", "estimate the bound and append to results.csv");
    add_common(ev, ev_c);
    ev->add_option("--objective", ev_obj);
    ev->add_option("--N", ev_n, "particle counts, e.g. --N 2,4,8,16")->delimiter(',');
    ev->add_option("--params", ev_params, "parameter file (default: the train output)");
    ev->add_option("--samples", ev_samples, "independent runs");

    std::string suite;
    auto* ver = app.add_subcommand("verify", "oracle and property suites");
    ver->add_option("suite", suite, "unbiasedness, identity, gradients, collapse, bounds or all")
        ->required();

    harness::BenchOptions bopt;
    std::string bench_out = "bench";
    std::string bench_model = "dmm";
    auto* be = app.add_subcommand("bench", "time SMC against MPF over N");
    be->add_option("--N", bopt.particles)->delimiter(',');
    be->add_option("--model", bench_model)->check(CLI::IsMember({"dmm", "lgssm"}));
    be->add_option("--reps", bopt.reps);
    be->add_option("--T", bopt.steps);
    be->add_flag("--grad", bopt.gradients, "time gradient evaluations");
    be->add_option("--seed", bopt.seed);
    be->add_option("--out", bench_out);

    std::vector<std::string> plot_in;
    std::string plot_out = "plots";
    std::optional<double> plot_ref;
    auto* pl = app.add_subcommand("plot", "SVG figures from train, results or bench CSVs");
    pl->add_option("--input", plot_in)->required()->check(CLI::ExistingFile);
    pl->add_option("--out", plot_out);
    pl->add_option("--reference", plot_ref, "horizontal reference line");

    CLI11_PARSE(app, argc, argv);
    try {
        if (*gen) return cmd_generate(gen_c);
        if (*tr) return cmd_train(train_c, train_obj, train_n, warm);
        if (*ev) return cmd_evaluate(ev_c, ev_obj, ev_n, ev_params, ev_samples);
        if (*ver) return cmd_verify(suite);
        if (*be) {
            bopt.model = bench_model == "dmm" ? harness::BenchModel::DMM : harness::BenchModel::LGSSM;
            return cmd_bench(bench_out, bopt);
        }
        if (*pl) return cmd_plot(plot_in, plot_out, plot_ref);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    }
    return 0;
}
