#include "harness.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include "smcvi/error.hpp"
#include "smcvi/hmm.hpp"

namespace smcvi::harness {

namespace {

Check make_check(std::string name, double measured, double tolerance) {
    return Check{std::move(name), measured, tolerance, measured <= tolerance};
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

double enumerated_evidence(const std::function<ParticleRun(Randomness&)>& run) {
    const auto e = enumerate_paths(
        [&](Randomness& rng) { return std::exp(run(rng).log_evidence().item()); });
    return e.expectation([](double p) { return p; });
}

FilterConfig plain(std::size_t n, std::size_t l = 1) {
    FilterConfig cfg;
    cfg.particles = n;
    cfg.grad = GradMode::None;
    cfg.permutations = l;
    return cfg;
}

// Small instances of each model family with non-default proposals.
Problem small_lgssm(std::size_t dx, std::size_t steps, std::uint64_t seed) {
    const Lgssm m = lgssm_make(dx, dx, 0.42, CMode::Dense, RngStream(seed));
    StreamRandomness sim(seed, 99);
    Problem p = lgssm_problem(m, simulate(LgssmModel(m), steps, sim).data, true);
    RngStream r(seed + 7);
    for (const char* name : {"q.mu", "q.beta", "q.log_sigma"}) {
        for (double& v : p.params.at(name).values()) {
            v += 0.3 * r.normal();
        }
    }
    return p;
}

Problem small_stochvol(std::size_t steps, std::uint64_t seed) {
    ExperimentConfig c = parse_config(R"({"model": {"kind": "stochvol", "d": 2,
        "b_mode": "triangular"}})");
    c.steps = steps;
    c.data_seed = seed;
    c.seed = seed;
    return build_problem(c, generate_dataset(c));
}

Problem small_dmm(std::size_t steps, std::uint64_t seed) {
    ExperimentConfig c = parse_config(R"({"model": {"kind": "dmm", "dx": 3, "dy": 5, "dh": 8}})");
    c.steps = steps;
    c.data_seed = seed;
    c.seed = seed + 1;
    return build_problem(c, generate_dataset(c));
}

double max_grad_diff(const GradientSample& a, const GradientSample& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.grads.size(); ++i) {
        for (std::size_t j = 0; j < a.grads[i].size(); ++j) {
            worst = std::max(worst, std::abs(a.grads[i][j] - b.grads[i][j]));
        }
    }
    return worst;
}

double fixed_noise_fd_error(const Objective& obj, Problem& p, std::uint64_t seed) {
    auto value = [&]() {
        StreamRandomness rng(seed, 0);
        return objective_sample(obj, p, rng);
    };
    StreamRandomness rng(seed, 0);
    const GradientSample g = objective_gradient(obj, p, rng);
    double worst = 0.0;
    for (std::size_t e = 0; e < p.params.size(); ++e) {
        if (!p.params.entry(e).trainable) {
            continue;
        }
        for (std::size_t j = 0; j < p.params.entry(e).value.size(); ++j) {
            const double h = 1e-5;
            double& v = p.params.entry(e).value[j];
            const double orig = v;
            v = orig + h;
            const double up = value();
            v = orig - h;
            const double down = value();
            v = orig;
            const double fd = (up - down) / (2 * h);
            worst = std::max(worst, std::abs(fd - g.grads[e][j]) / std::max(1.0, std::abs(fd)));
        }
    }
    return worst;
}

}  // namespace

std::string check_json(const std::string& suite, const Check& c) {
    std::ostringstream os;
    os << "{\"suite\": \"" << suite << "\", \"check\": \"" << c.name
       << "\", \"measured\": " << fmt(c.measured) << ", \"tolerance\": " << fmt(c.tolerance)
       << ", \"pass\": " << (c.pass ? "true" : "false") << "}";
    return os.str();
}

const std::vector<std::string>& verify_suites() {
    static const std::vector<std::string> names{"unbiasedness", "identity", "gradients",
                                                "collapse", "bounds"};
    return names;
}

std::vector<Check> run_suite(const std::string& suite) {
    if (suite == "unbiasedness") return suite_unbiasedness();
    if (suite == "identity") return suite_identity();
    if (suite == "gradients") return suite_gradients();
    if (suite == "collapse") return suite_collapse();
    if (suite == "bounds") return suite_bounds();
    throw std::invalid_argument("unknown verify suite " + suite +
                                " (expected unbiasedness, identity, gradients, collapse or bounds)");
}

std::vector<Check> suite_unbiasedness() {
    std::vector<Check> out;
    const auto start = std::chrono::steady_clock::now();
    const DiscreteHmm h = reference_hmm();
    const HmmModel model(h);
    const HmmProposal proposal(reference_hmm_proposal());
    const std::vector<std::size_t> symbols{0, 0};
    const Dataset data = hmm_dataset(symbols);
    const double z = std::exp(hmm_forward(h, symbols));
    out.push_back(make_check("forward p(y) vs 0.3525", std::abs(z - 0.3525), 1e-12));
    for (std::size_t n : {2u, 3u}) {
        const std::string tag = " N=" + std::to_string(n);
        out.push_back(make_check(
            "SMC" + tag,
            std::abs(enumerated_evidence([&](Randomness& r) {
                         return run_smc(model, proposal, data, plain(n), r);
                     }) - z),
            1e-12));
        out.push_back(make_check(
            "MPF" + tag,
            std::abs(enumerated_evidence([&](Randomness& r) {
                         return run_mpf(model, proposal, data, plain(n), r);
                     }) - z),
            1e-12));
        out.push_back(make_check(
            "TMC" + tag,
            std::abs(enumerated_evidence([&](Randomness& r) {
                         return run_tmc(model, proposal, data, plain(n), r);
                     }) - z),
            1e-12));
        for (std::size_t l : {1u, 2u}) {
            out.push_back(make_check(
                "IPF L=" + std::to_string(l) + tag,
                std::abs(enumerated_evidence([&](Randomness& r) {
                             return run_ipf(model, proposal, data, plain(n, l), r);
                         }) - z),
                1e-12));
        }
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    out.push_back(make_check("runtime seconds", secs, 1.0));
    return out;
}

std::vector<Check> suite_identity() {
    std::vector<Check> out;
    auto family = [&](const std::string& name, auto make) {
        double worst = 0.0;
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            const Problem p = make(seed);
            const BoundParams bp(p.params, nullptr);
            const auto model = p.make_model(bp);
            const auto proposal = p.make_proposal(bp);
            FilterConfig cfg = plain(4);
            StreamRandomness rng(seed, 0);
            const ParticleRun run = run_mpf(*model, *proposal, p.data, cfg, rng);
            worst = std::max(worst, mpf_tmc_identity_check(*model, *proposal, p.data, run));
        }
        out.push_back(make_check(name + " over 20 seeds", worst, 1e-9));
    };
    family("LGSSM", [](std::uint64_t s) { return small_lgssm(2, 5, s + 1); });
    family("stochastic volatility", [](std::uint64_t s) { return small_stochvol(6, s + 1); });
    family("DMM", [](std::uint64_t s) { return small_dmm(5, s + 1); });
    double worst = 0.0;
    const HmmModel model(reference_hmm());
    const HmmProposal proposal(reference_hmm_proposal());
    const std::vector<std::size_t> symbols{0, 1, 1, 0, 0};
    const Dataset data = hmm_dataset(symbols);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        StreamRandomness rng(seed, 0);
        const ParticleRun run = run_mpf(model, proposal, data, plain(3), rng);
        worst = std::max(worst, mpf_tmc_identity_check(model, proposal, data, run));
    }
    out.push_back(make_check("HMM over 20 seeds", worst, 1e-9));
    return out;
}

std::vector<Check> autodiff_op_checks(std::size_t trials, std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> unif(-1.5, 1.5);
    auto random_tensor = [&](std::size_t r, std::size_t c) {
        Tensor t(r, c);
        for (double& v : t.values()) {
            v = unif(gen);
        }
        return t;
    };
    using F = std::function<TapeVar(std::span<const TapeVar>)>;
    const std::vector<std::pair<std::string, F>> cases = {
        {"add", [](auto v) { return sum(v[0] + v[1]); }},
        {"sub", [](auto v) { return sum(v[0] - v[1]); }},
        {"mul", [](auto v) { return sum(v[0] * v[1]); }},
        {"div", [](auto v) { return sum(v[0] / (v[1] * v[1] + 1.0)); }},
        {"neg", [](auto v) { return sum(-v[0] * v[1]); }},
        {"exp", [](auto v) { return sum(exp(v[0]) * v[1]); }},
        {"log", [](auto v) { return sum(log(v[0] * v[0] + 0.5) * v[1]); }},
        {"sqrt", [](auto v) { return sum(sqrt(v[0] * v[0] + 0.5) * v[1]); }},
        {"erf", [](auto v) { return sum(erf(v[0]) * v[1]); }},
        {"sigmoid", [](auto v) { return sum(sigmoid(v[0]) * v[1]); }},
        {"leaky_relu", [](auto v) { return sum(leaky_relu(v[0] + 0.05) * v[1]); }},
        {"tanh", [](auto v) { return sum(tanh(v[0]) * v[1]); }},
        {"softplus", [](auto v) { return sum(softplus(v[0]) * v[1]); }},
        {"matmul", [](auto v) { return sum(matmul(v[0], transpose(v[1]))); }},
        {"max", [](auto v) { return max(v[0] * v[1]); }},
        {"max axis 1", [](auto v) { return sum(max(v[0] + v[1], 1)); }},
        {"logsumexp", [](auto v) { return logsumexp(v[0] * v[1]); }},
        {"logsumexp axis 0", [](auto v) { return sum(logsumexp(v[0] - v[1], 0)); }},
        {"logsumexp axis 1", [](auto v) { return sum(logsumexp(v[0] * v[1], 1)); }},
        {"sum axis 0", [](auto v) { return sum(exp(sum(v[0] * v[1], 0))); }},
        {"broadcast",
         [](auto v) { return sum(broadcast_to(slice_rows(v[0], 0, 1), 3, 4) * v[1]); }},
        {"gather",
         [](auto v) {
             const std::vector<std::size_t> idx{2, 0, 2};
             return sum(gather_rows(v[0], idx) * v[1]);
         }},
        {"concat",
         [](auto v) {
             std::vector<TapeVar> rows{slice_rows(v[0], 1, 2), slice_rows(v[1], 0, 1)};
             std::vector<TapeVar> cols{slice_cols(v[1], 0, 2), slice_cols(v[0], 1, 2)};
             return sum(exp(concat_rows(rows)) * concat_cols(cols));
         }},
    };
    std::vector<Check> out;
    for (const auto& [name, f] : cases) {
        double worst = 0.0;
        for (std::size_t k = 0; k < trials; ++k) {
            const std::vector<Tensor> point{random_tensor(3, 4), random_tensor(3, 4)};
            worst = std::max(worst, finite_diff_check(f, point));
        }
        out.push_back(make_check("op " + name, worst, 1e-5));
    }
    return out;
}

std::vector<Check> suite_gradients() {
    std::vector<Check> out = autodiff_op_checks(10, 7);
    Problem lg = small_lgssm(2, 3, 5);
    for (ObjectiveKind k : {ObjectiveKind::IWVI, ObjectiveKind::TMC}) {
        double worst = 0.0;
        for (std::uint64_t seed : {1u, 2u, 3u}) {
            worst = std::max(worst, fixed_noise_fd_error({k, 3}, lg, seed));
        }
        out.push_back(make_check(to_string(k) + " LGSSM fixed-noise finite differences", worst,
                                 1e-5));
    }
    Problem sv = small_stochvol(4, 3);
    out.push_back(make_check("IWVI stochastic volatility fixed-noise finite differences",
                             fixed_noise_fd_error({ObjectiveKind::IWVI, 2}, sv, 1), 1e-5));
    for (auto* p : {&lg, &sv}) {
        double worst = 0.0;
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            StreamRandomness a(seed, 0), b(seed, 0);
            worst = std::max(worst,
                             max_grad_diff(gradient_biased({ObjectiveKind::VMPF_BG, 1}, *p, a),
                                           gradient_unbiased({ObjectiveKind::VMPF_UG, 1}, *p, b)));
        }
        out.push_back(make_check(std::string("N=1 biased vs unbiased, ") +
                                     (p == &lg ? "LGSSM" : "stochastic volatility"),
                                 worst, 1e-10));
    }
    return out;
}

std::vector<Check> suite_collapse() {
    std::vector<Check> out;
    const std::vector<std::pair<std::string, Problem>> problems = [] {
        std::vector<std::pair<std::string, Problem>> v;
        v.emplace_back("LGSSM", small_lgssm(2, 4, 3));
        v.emplace_back("stochastic volatility", small_stochvol(5, 2));
        v.emplace_back("DMM", small_dmm(4, 2));
        return v;
    }();
    const ObjectiveKind kinds[] = {ObjectiveKind::VSMC, ObjectiveKind::VMPF_BG,
                                   ObjectiveKind::VMPF_UG};
    for (const auto& [name, p] : problems) {
        double value_diff = 0.0, grad_diff = 0.0;
        for (std::uint64_t seed = 0; seed < 10; ++seed) {
            StreamRandomness r0(seed, 0);
            const GradientSample ref = objective_gradient({ObjectiveKind::IWVI, 1}, p, r0);
            for (ObjectiveKind k : kinds) {
                StreamRandomness r1(seed, 0), r2(seed, 0);
                const double v = objective_sample({k, 1}, p, r1);
                const GradientSample g = objective_gradient({k, 1}, p, r2);
                if (!(v == ref.value)) {
                    value_diff = std::max(value_diff, std::isnan(v) ? INFINITY : std::abs(v - ref.value));
                }
                grad_diff = std::max(grad_diff, max_grad_diff(g, ref));
            }
        }
        out.push_back(make_check(name + " N=1 values bit-equal", value_diff, 0.0));
        out.push_back(make_check(name + " N=1 gradients", grad_diff, 1e-10));
    }
    return out;
}

std::vector<Check> suite_bounds() {
    std::vector<Check> out;
    for (CMode mode : {CMode::Sparse, CMode::Dense}) {
        const Lgssm m = lgssm_make(3, 3, 0.42, mode, RngStream(4));
        StreamRandomness sim(4, 1);
        const Problem p = lgssm_problem(m, simulate(LgssmModel(m), 6, sim).data, true);
        const double exact = kalman_loglik(m, p.data);
        for (ObjectiveKind k : {ObjectiveKind::IWVI, ObjectiveKind::VSMC, ObjectiveKind::TMC,
                                ObjectiveKind::VMPF_BG, ObjectiveKind::VMPF_UG}) {
            const BoundEstimate b = bound_estimate({k, 4}, p, 2000, 9);
            // measured: how many standard errors the bound sits above log p(y).
            out.push_back(make_check(to_string(k) + (mode == CMode::Sparse ? " sparse" : " dense") +
                                         " (mean - kalman) / se",
                                     (b.mean - exact) / b.se, 3.0));
        }
    }
    return out;
}

std::vector<BenchRow> bench(const BenchOptions& opt) {
    Problem p;
    if (opt.model == BenchModel::DMM) {
        ExperimentConfig c = parse_config(R"({"model": {"kind": "dmm"}})");
        c.steps = opt.steps;
        c.data_seed = opt.seed;
        p = build_problem(c, generate_dataset(c));
    } else {
        ExperimentConfig c = parse_config(R"({"model": {"kind": "lgssm", "dx": 10, "dy": 10}})");
        c.steps = opt.steps;
        c.data_seed = opt.seed;
        p = build_problem(c, generate_dataset(c));
    }
    std::vector<BenchRow> rows;
    for (std::size_t n : opt.particles) {
        auto once = [&](ObjectiveKind k, std::uint64_t run) {
            const Objective obj{k, n};
            StreamRandomness rng(opt.seed, run);
            const auto t0 = std::chrono::steady_clock::now();
            if (opt.gradients) {
                objective_gradient(obj, p, rng);
            } else {
                objective_sample(obj, p, rng);
            }
            return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                             t0)
                .count();
        };
        // Interleaved so that drift in machine load hits both filters alike.
        once(ObjectiveKind::VSMC, 1000);
        once(ObjectiveKind::VMPF_BG, 1000);
        std::vector<double> smc, mpf;
        for (std::size_t r = 0; r < opt.reps; ++r) {
            smc.push_back(once(ObjectiveKind::VSMC, r));
            mpf.push_back(once(ObjectiveKind::VMPF_BG, r));
        }
        auto median = [&](std::vector<double>& v) {
            std::nth_element(v.begin(), v.begin() + v.size() / 2, v.end());
            return v[v.size() / 2] / static_cast<double>(opt.steps);
        };
        rows.push_back({"SMC", n, median(smc)});
        rows.push_back({"MPF", n, median(mpf)});
    }
    return rows;
}

PolyFit poly_fit(const std::vector<double>& x, const std::vector<double>& y, std::size_t degree) {
    const std::size_t n = x.size(), k = degree + 1;
    require(n == y.size() && n > k, "poly_fit needs more points than coefficients");
    Eigen::MatrixXd X(n, k);
    Eigen::VectorXd Y(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < k; ++j) {
            X(i, j) = std::pow(x[i], static_cast<double>(j));
        }
        Y(i) = y[i];
    }
    const Eigen::VectorXd beta = X.colPivHouseholderQr().solve(Y);
    const double rss = (Y - X * beta).squaredNorm();
    const Eigen::MatrixXd cov =
        (X.transpose() * X).inverse() * (rss / static_cast<double>(n - k));
    PolyFit out;
    for (std::size_t j = 0; j < k; ++j) {
        out.coef.push_back(beta(j));
        out.se.push_back(std::sqrt(std::max(0.0, cov(j, j))));
    }
    return out;
}

BenchSummary summarize_bench(const std::vector<BenchRow>& rows) {
    std::vector<double> nm, tm, ns, ts;
    std::map<std::size_t, double> smc_at;
    for (const auto& r : rows) {
        if (r.filter == "MPF") {
            nm.push_back(static_cast<double>(r.particles));
            tm.push_back(r.step_ms);
        } else {
            ns.push_back(static_cast<double>(r.particles));
            ts.push_back(r.step_ms);
            smc_at[r.particles] = r.step_ms;
        }
    }
    BenchSummary s;
    s.mpf = poly_fit(nm, tm, 2);
    s.smc = poly_fit(ns, ts, 2);
    s.smc_linear = poly_fit(ns, ts, 1);
    s.mpf_t_stat = s.mpf.se[2] > 0 ? s.mpf.coef[2] / s.mpf.se[2] : INFINITY;
    const double nmax = *std::max_element(ns.begin(), ns.end());
    s.smc_quadratic_share = std::abs(s.smc.coef[2] * nmax * nmax) / std::abs(s.smc.coef[1] * nmax);
    s.crossover = s.mpf.coef[2] > 0 ? s.mpf.coef[1] / s.mpf.coef[2] : INFINITY;
    for (const auto& r : rows) {
        if (r.filter == "MPF" && smc_at.contains(r.particles)) {
            s.ratio[r.particles] = r.step_ms / smc_at[r.particles];
        }
    }
    return s;
}

std::string svg_plot(const std::vector<Series>& series, const PlotOptions& opt) {
    const double W = 640, H = 420, left = 70, right = 150, top = 40, bottom = 50;
    auto ty = [&](double v) { return opt.log_y ? std::log10(v) : v; };
    double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
    for (const auto& s : series) {
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (!std::isfinite(s.y[i]) || (opt.log_y && s.y[i] <= 0)) {
                continue;
            }
            x0 = std::min(x0, s.x[i]);
            x1 = std::max(x1, s.x[i]);
            y0 = std::min(y0, ty(s.y[i]));
            y1 = std::max(y1, ty(s.y[i]));
        }
    }
    if (opt.reference && (!opt.log_y || *opt.reference > 0)) {
        y0 = std::min(y0, ty(*opt.reference));
        y1 = std::max(y1, ty(*opt.reference));
    }
    if (!std::isfinite(x0)) {
        x0 = 0, x1 = 1;
    }
    if (!std::isfinite(y0)) {
        y0 = 0, y1 = 1;
    }
    if (x1 == x0) {
        x1 = x0 + 1;
    }
    if (y1 == y0) {
        y0 -= 0.5, y1 += 0.5;
    }
    const double pad = 0.05 * (y1 - y0);
    y0 -= pad;
    y1 += pad;
    const double pw = W - left - right, ph = H - top - bottom;
    auto px = [&](double v) { return left + (v - x0) / (x1 - x0) * pw; };
    auto py = [&](double v) { return top + ph - (v - y0) / (y1 - y0) * ph; };

    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
       << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << W / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">"
       << opt.title << "</text>\n";
    os << "<line x1=\"" << left << "\" y1=\"" << top + ph << "\" x2=\"" << left + pw << "\" y2=\""
       << top + ph << "\" stroke=\"black\"/>\n";
    os << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\""
       << top + ph << "\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        const double xv = x0 + (x1 - x0) * i / 4, yv = y0 + (y1 - y0) * i / 4;
        os << "<text x=\"" << px(xv) << "\" y=\"" << top + ph + 16
           << "\" text-anchor=\"middle\">" << fmt(xv) << "</text>\n";
        os << "<text x=\"" << left - 6 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\">"
           << (opt.log_y ? "1e" + fmt(yv) : fmt(yv)) << "</text>\n";
        os << "<line x1=\"" << left << "\" y1=\"" << py(yv) << "\" x2=\"" << left + pw
           << "\" y2=\"" << py(yv) << "\" stroke=\"#ddd\"/>\n";
    }
    os << "<text x=\"" << left + pw / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">"
       << opt.x_label << "</text>\n";
    os << "<text transform=\"translate(16," << top + ph / 2
       << ") rotate(-90)\" text-anchor=\"middle\">" << opt.y_label << "</text>\n";
    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                   "#8c564b", "#17becf"};
    double legend_y = top + 10;
    for (std::size_t k = 0; k < series.size(); ++k) {
        const auto& s = series[k];
        const char* color = colors[k % 7];
        os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (std::isfinite(s.y[i]) && (!opt.log_y || s.y[i] > 0)) {
                os << px(s.x[i]) << ',' << py(ty(s.y[i])) << ' ';
            }
        }
        os << "\"/>\n";
        os << "<line x1=\"" << left + pw + 10 << "\" y1=\"" << legend_y << "\" x2=\""
           << left + pw + 30 << "\" y2=\"" << legend_y << "\" stroke=\"" << color
           << "\" stroke-width=\"2\"/>\n";
        os << "<text x=\"" << left + pw + 35 << "\" y=\"" << legend_y + 4 << "\">" << s.label
           << "</text>\n";
        legend_y += 16;
    }
    if (opt.reference && (!opt.log_y || *opt.reference > 0)) {
        const double y = py(ty(*opt.reference));
        os << "<line x1=\"" << left << "\" y1=\"" << y << "\" x2=\"" << left + pw << "\" y2=\""
           << y << "\" stroke=\"black\" stroke-width=\"1.5\"/>\n";
        os << "<line x1=\"" << left + pw + 10 << "\" y1=\"" << legend_y << "\" x2=\""
           << left + pw + 30 << "\" y2=\"" << legend_y << "\" stroke=\"black\" stroke-width=\"2\"/>\n";
        os << "<text x=\"" << left + pw + 35 << "\" y=\"" << legend_y + 4 << "\">"
           << opt.reference_label << "</text>\n";
    }
    os << "</svg>\n";
    return os.str();
}

std::optional<std::size_t> CsvTable::column(const std::string& name) const {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) {
        return std::nullopt;
    }
    return static_cast<std::size_t>(it - header.begin());
}

CsvTable read_csv(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) {
        throw std::runtime_error("cannot read " + path.string());
    }
    auto split = [](const std::string& line) {
        std::vector<std::string> out;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            out.push_back(cell);
        }
        if (!line.empty() && line.back() == ',') {
            out.emplace_back();
        }
        return out;
    };
    CsvTable t;
    std::string line;
    if (!std::getline(f, line)) {
        return t;
    }
    t.header = split(line);
    std::size_t lineno = 1;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) {
            continue;
        }
        auto row = split(line);
        if (row.size() != t.header.size()) {
            throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": expected " +
                                     std::to_string(t.header.size()) + " fields, got " +
                                     std::to_string(row.size()));
        }
        t.rows.push_back(std::move(row));
    }
    return t;
}

void append_result(const std::filesystem::path& path, const ResultRow& r) {
    const bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
    std::ofstream f(path, std::ios::app);
    if (!f) {
        throw std::runtime_error("cannot write " + path.string());
    }
    if (fresh) {
        f << kResultsHeader << '\n';
    }
    char buf[512];
    std::snprintf(buf, sizeof buf, "%s,%s,%zu,%.10g,%.6g,", r.config_hash.c_str(),
                  r.objective.c_str(), r.particles, r.mean, r.se);
    f << buf;
    if (r.kalman) {
        std::snprintf(buf, sizeof buf, "%.10g", *r.kalman);
        f << buf;
    }
    std::snprintf(buf, sizeof buf, ",%.3f,%llu\n", r.wall_ms,
                  static_cast<unsigned long long>(r.seed));
    f << buf;
}

}  // namespace smcvi::harness
