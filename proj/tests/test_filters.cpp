#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <functional>
#include <map>
#include <numeric>

#include "smcvi/error.hpp"
#include "smcvi/filters.hpp"
#include "smcvi/hmm.hpp"
#include "smcvi/lgssm.hpp"

using namespace smcvi;

namespace {

using Runner = std::function<ParticleRun(Randomness&)>;

struct HmmSetup {
    HmmModel model{reference_hmm()};
    HmmProposal proposal{reference_hmm_proposal()};
    Dataset data;
    double log_z = 0.0;

    explicit HmmSetup(std::vector<std::size_t> symbols) {
        data = hmm_dataset(symbols);
        log_z = hmm_forward(reference_hmm(), symbols);
    }
};

Runner filter_runner(const StateSpaceModel& model, const Proposal& proposal, const Dataset& data,
                     FilterKind kind, FilterConfig cfg) {
    return [&model, &proposal, &data, kind, cfg](Randomness& rng) {
        switch (kind) {
            case FilterKind::SMC:
                return run_smc(model, proposal, data, cfg, rng);
            case FilterKind::MPF:
                return run_mpf(model, proposal, data, cfg, rng);
            case FilterKind::IPF:
                return run_ipf(model, proposal, data, cfg, rng);
            case FilterKind::TMC:
                return run_tmc(model, proposal, data, cfg, rng);
        }
        throw std::logic_error("unknown filter");
    };
}

double enumerated_evidence(const Runner& run) {
    const auto e = enumerate_paths([&](Randomness& rng) {
        return std::exp(run(rng).log_evidence().item());
    });
    return e.expectation([](double p) { return p; });
}

FilterConfig plain(std::size_t n, std::size_t l = 1) {
    FilterConfig cfg;
    cfg.particles = n;
    cfg.grad = GradMode::None;
    cfg.permutations = l;
    return cfg;
}

Lgssm scalar_lgssm(double a) {
    return Lgssm{Tensor::matrix({{a}}), Tensor::matrix({{1.0}}), Tensor::row({1.0}),
                 Tensor::row({1.0})};
}

Dataset scalar_data(std::initializer_list<double> ys) {
    Dataset d;
    for (double y : ys) {
        d.y.push_back(Tensor::row({y}));
    }
    return d;
}

// A proposal that is not the prior, so the filters differ from each other.
ParameterSet tilted_params(std::size_t steps, std::size_t dx) {
    ParameterSet ps;
    add_lgssm_proposal_params(ps, steps, dx);
    for (std::size_t t = 0; t < steps; ++t) {
        for (std::size_t j = 0; j < dx; ++j) {
            ps.at("q.mu")(t, j) = 0.2 * std::sin(1.0 + t + j);
            ps.at("q.beta")(t, j) = 0.7;
            ps.at("q.log_sigma")(t, j) = -0.3;
        }
    }
    return ps;
}

}  // namespace

TEST_CASE("enumerated evidence equals the forward oracle for every filter") {
    const HmmSetup two({0, 0});
    CHECK(std::exp(two.log_z) == doctest::Approx(0.3525).epsilon(1e-14));
    const double z = std::exp(two.log_z);
    for (std::size_t n : {1u, 2u, 3u}) {
        CAPTURE(n);
        CHECK(std::abs(enumerated_evidence(filter_runner(two.model, two.proposal, two.data,
                                                         FilterKind::SMC, plain(n))) -
                       z) < 1e-12);
        CHECK(std::abs(enumerated_evidence(filter_runner(two.model, two.proposal, two.data,
                                                         FilterKind::MPF, plain(n))) -
                       z) < 1e-12);
        CHECK(std::abs(enumerated_evidence(filter_runner(two.model, two.proposal, two.data,
                                                         FilterKind::TMC, plain(n))) -
                       z) < 1e-12);
        for (std::size_t l = 1; l <= n; ++l) {
            CAPTURE(l);
            CHECK(std::abs(enumerated_evidence(filter_runner(two.model, two.proposal, two.data,
                                                             FilterKind::IPF, plain(n, l))) -
                           z) < 1e-12);
        }
    }

    const HmmSetup three({0, 1, 0});
    const double z3 = std::exp(three.log_z);
    for (FilterKind kind : {FilterKind::SMC, FilterKind::MPF, FilterKind::TMC}) {
        CHECK(std::abs(enumerated_evidence(filter_runner(three.model, three.proposal, three.data,
                                                         kind, plain(3))) -
                       z3) < 1e-12);
    }
    for (std::size_t l : {1u, 2u}) {
        CHECK(std::abs(enumerated_evidence(filter_runner(three.model, three.proposal, three.data,
                                                         FilterKind::IPF, plain(2, l))) -
                       z3) < 1e-12);
    }
}

TEST_CASE("final-step couplings are proper: E[p_hat * sum w_bar delta] = p(x_T, y)") {
    const HmmSetup s({0, 1});
    const std::vector<std::size_t> symbols{0, 1};
    const std::vector<double> joint = hmm_forward_joint(reference_hmm(), symbols);
    for (FilterKind kind : {FilterKind::SMC, FilterKind::MPF, FilterKind::TMC}) {
        const Runner run = filter_runner(s.model, s.proposal, s.data, kind, plain(2));
        for (std::size_t k = 0; k < 2; ++k) {
            const auto e = enumerate_paths([&](Randomness& rng) {
                const ParticleRun r = run(rng);
                const std::vector<double> w = normalized_weights(r.log_weights.back().value());
                double mass = 0.0;
                for (std::size_t i = 0; i < w.size(); ++i) {
                    if (r.particles.back().value()(i, 0) == static_cast<double>(k)) {
                        mass += w[i];
                    }
                }
                return std::exp(r.log_evidence().item()) * mass;
            });
            CHECK(std::abs(e.expectation([](double v) { return v; }) - std::exp(joint[k])) <
                  1e-12);
        }
    }
}

TEST_CASE("MPF weight hand case") {
    // Three states; the first step puts its particles on states 0 and 1 with
    // equal weights, and state 2 is reached with f = [0.2, 0.4], r = [0.3, 0.1].
    DiscreteHmm h{{0.5, 0.5, 0.0},
                  {{0.4, 0.4, 0.2}, {0.3, 0.3, 0.4}, {0.5, 0.5, 0.0}},
                  {{0.5, 0.5}, {0.5, 0.5}, {0.5, 0.5}}};
    DiscreteProposalTables tables{{0.5, 0.5, 0.0},
                                  {{0.35, 0.35, 0.3}, {0.45, 0.45, 0.1}, {0.5, 0.5, 0.0}},
                                  {0.4, 0.4, 0.2}};
    const HmmModel model(h);
    const HmmProposal proposal(tables);
    const std::vector<std::size_t> symbols{0, 0};
    const Dataset data = hmm_dataset(symbols);
    const auto e = enumerate_paths([&](Randomness& rng) {
        return run_mpf(model, proposal, data, plain(2), rng);
    });
    bool seen = false;
    for (const auto& o : e.outcomes) {
        const Tensor& x0 = o.result.particles[0].value();
        const Tensor& x1 = o.result.particles[1].value();
        if (x0[0] == 0.0 && x0[1] == 1.0 && x1[0] == 2.0) {
            seen = true;
            // v = (0.2 * 0.5 + 0.4 * 0.5) / (0.3 + 0.1); only v_bar enters, so
            // equal previous weights act as v_prev = [1, 1].
            CHECK(o.result.log_weights[0].value()[0] == o.result.log_weights[0].value()[1]);
            CHECK(std::exp(o.result.log_weights[1].value()[0]) ==
                  doctest::Approx(0.75).epsilon(1e-14));
        }
    }
    CHECK(seen);
}

TEST_CASE("TMC equals the explicit exponential sum") {
    const Lgssm m = scalar_lgssm(0.6);
    const LgssmModel model(m);
    const ParameterSet ps = tilted_params(3, 1);
    const BoundParams bp(ps, nullptr);
    const LgssmProposal proposal(m, bp);
    const Dataset data = scalar_data({0.3, -0.4, 1.1});
    for (std::size_t n : {2u, 3u}) {
        for (std::size_t steps : {2u, 3u}) {
            Dataset d;
            d.y.assign(data.y.begin(), data.y.begin() + steps);
            StreamRandomness rng(4, n * 10 + steps);
            const ParticleRun run = run_tmc(model, proposal, d, plain(n), rng);
            auto log_ratio = [&](std::size_t t, std::size_t i, std::optional<std::size_t> j) {
                const double x = run.particles[t].value()[i];
                const TapeVar xv = constant(Tensor::row({x}));
                double lf = 0.0;
                if (j) {
                    lf = model.transition(constant(Tensor::row({run.particles[t - 1].value()[*j]})))
                             ->log_density(xv)
                             .item();
                } else {
                    lf = model.initial()->log_density(xv).item();
                }
                return lf + model.log_observation(xv, d.y[t]).item() -
                       proposal.independent(t, d.y[t])->log_density(xv).item();
            };
            double total = 0.0;
            std::vector<std::size_t> idx(steps, 0);
            for (;;) {
                double lp = log_ratio(0, idx[0], std::nullopt);
                for (std::size_t t = 1; t < steps; ++t) {
                    lp += log_ratio(t, idx[t], idx[t - 1]);
                }
                total += std::exp(lp);
                std::size_t k = 0;
                while (k < steps && ++idx[k] == n) {
                    idx[k++] = 0;
                }
                if (k == steps) {
                    break;
                }
            }
            const double brute = std::log(total) - steps * std::log(static_cast<double>(n));
            CHECK(std::abs(run.log_evidence().item() - brute) < 1e-10);
        }
    }
}

TEST_CASE("IPF with L = N matches TMC; permutations are columnwise distinct") {
    const Lgssm m = lgssm_make(2, 2, 0.42, CMode::Sparse, RngStream(1));
    const LgssmModel model(m);
    const ParameterSet ps = tilted_params(4, 2);
    const BoundParams bp(ps, nullptr);
    const LgssmProposal proposal(m, bp);
    StreamRandomness sim_rng(8, 0);
    const Dataset data = simulate(model, 4, sim_rng).data;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        StreamRandomness r1(seed, 1), r2(seed, 1);
        const ParticleRun ipf = run_ipf(model, proposal, data, plain(4, 4), r1);
        const ParticleRun tmc = run_tmc(model, proposal, data, plain(4), r2);
        for (std::size_t t = 0; t < 4; ++t) {
            for (std::size_t i = 0; i < 4; ++i) {
                CHECK(ipf.log_weights[t].value()[i] ==
                      doctest::Approx(tmc.log_weights[t].value()[i]).epsilon(1e-12));
            }
        }
    }

    StreamRandomness rng(3, 3);
    for (std::size_t l = 1; l <= 5; ++l) {
        const auto perms = distinct_permutations(5, l, rng, 7);
        REQUIRE(perms.size() == l);
        for (const auto& p : perms) {
            std::vector<std::size_t> sorted = p;
            std::sort(sorted.begin(), sorted.end());
            CHECK(sorted == iota_indices(5));
        }
        for (std::size_t i = 0; i < 5; ++i) {
            for (std::size_t a = 0; a < l; ++a) {
                for (std::size_t b = a + 1; b < l; ++b) {
                    CHECK(perms[a][i] != perms[b][i]);
                }
            }
        }
    }
    StreamRandomness one(9, 0);
    const ParticleRun single = run_ipf(model, proposal, data, plain(3, 1), one);
    CHECK(single.matchings[1].size() == 1);
    CHECK_THROWS_AS(run_ipf(model, proposal, data, plain(2, 3), one), ContractViolation);
}

TEST_CASE("N = 1 collapse: SMC, MPF and IWVI are bit-identical") {
    const Lgssm m = lgssm_make(3, 2, 0.42, CMode::Dense, RngStream(2));
    const LgssmModel model(m);
    const ParameterSet ps = tilted_params(6, 3);
    const BoundParams bp(ps, nullptr);
    const LgssmProposal proposal(m, bp);
    StreamRandomness sim_rng(5, 0);
    const Dataset data = simulate(model, 6, sim_rng).data;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        FilterConfig smc = plain(1);
        FilterConfig iwvi = plain(1);
        iwvi.resample = false;
        FilterConfig ug = plain(1);
        ug.grad = GradMode::Unbiased;
        StreamRandomness a(seed, 0), b(seed, 0), c(seed, 0), d(seed, 0);
        const double v_smc = run_smc(model, proposal, data, smc, a).log_evidence().item();
        const double v_iwvi = run_smc(model, proposal, data, iwvi, b).log_evidence().item();
        const double v_mpf = run_mpf(model, proposal, data, plain(1), c).log_evidence().item();
        const double v_ug = run_mpf(model, proposal, data, ug, d).log_evidence().item();
        CHECK(v_smc == v_iwvi);
        CHECK(v_smc == v_mpf);
        CHECK(v_smc == v_ug);
    }
}

TEST_CASE("MPF-TMC identity holds on every run") {
    const Lgssm m = lgssm_make(2, 2, 0.42, CMode::Dense, RngStream(2));
    const LgssmModel model(m);
    const ParameterSet ps = tilted_params(5, 2);
    const BoundParams bp(ps, nullptr);
    const LgssmProposal proposal(m, bp);
    StreamRandomness sim_rng(5, 0);
    const Dataset data = simulate(model, 5, sim_rng).data;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        StreamRandomness rng(seed, 0);
        const ParticleRun run = run_mpf(model, proposal, data, plain(4), rng);
        CHECK(mpf_tmc_identity_check(model, proposal, data, run) < 1e-9);
        StreamRandomness rng1(seed, 0);
        const ParticleRun solo = run_mpf(model, proposal, data, plain(1), rng1);
        CHECK(mpf_tmc_identity_check(model, proposal, data, solo) < 1e-12);
    }
    Dataset first;
    first.y = {data.y[0]};
    StreamRandomness rng(1, 0);
    const ParticleRun t1 = run_mpf(model, proposal, first, plain(3), rng);
    CHECK(mpf_tmc_identity_check(model, proposal, first, t1) == 0.0);
}

TEST_CASE("Monte Carlo unbiasedness against the Kalman filter") {
    const Lgssm m = scalar_lgssm(0.42);
    const LgssmModel model(m);
    const ParameterSet ps = tilted_params(5, 1);
    const BoundParams bp(ps, nullptr);
    const LgssmProposal proposal(m, bp);
    const Dataset data = scalar_data({0.5, -0.2, 1.3, 0.1, -0.7});
    const double log_z = kalman_loglik(m, data);
    const std::size_t runs = 20000;
    for (FilterKind kind : {FilterKind::SMC, FilterKind::MPF, FilterKind::IPF, FilterKind::TMC}) {
        CAPTURE(static_cast<int>(kind));
        const Runner run = filter_runner(model, proposal, data, kind, plain(4, 2));
        double s = 0.0, ss = 0.0, ls = 0.0, lss = 0.0;
        for (std::size_t k = 0; k < runs; ++k) {
            StreamRandomness rng(100 + static_cast<int>(kind), k);
            const double lp = run(rng).log_evidence().item();
            const double ratio = std::exp(lp - log_z);
            s += ratio;
            ss += ratio * ratio;
            ls += lp;
            lss += lp * lp;
        }
        const double mean = s / runs;
        const double se = std::sqrt((ss / runs - mean * mean) / runs);
        CHECK(std::abs(mean - 1.0) < 4.0 * se);
        const double lmean = ls / runs;
        const double lse_ = std::sqrt((lss / runs - lmean * lmean) / runs);
        CHECK(lmean <= log_z + 3.0 * lse_);
    }
}

TEST_CASE("Rao-Blackwell: MPF step increments have lower conditional variance") {
    const HmmSetup s({0, 1});
    auto grouped = [&](FilterKind kind) {
        const auto e = enumerate_paths([&](Randomness& rng) {
            return filter_runner(s.model, s.proposal, s.data, kind, plain(2))(rng);
        });
        // Condition on the step-0 particles; both filters share that step.
        std::map<std::vector<double>, std::array<double, 3>> moments;
        for (const auto& o : e.outcomes) {
            const auto v = o.result.particles[0].value().values();
            const std::vector<double> key(v.begin(), v.end());
            const double inc = std::exp(o.result.log_evidence_steps[1].item() -
                                        o.result.log_evidence_steps[0].item());
            auto& m = moments[key];
            m[0] += o.probability;
            m[1] += o.probability * inc;
            m[2] += o.probability * inc * inc;
        }
        std::map<std::vector<double>, std::pair<double, double>> out;
        for (const auto& [key, m] : moments) {
            const double mean = m[1] / m[0];
            out[key] = {mean, m[2] / m[0] - mean * mean};
        }
        return out;
    };
    const auto smc = grouped(FilterKind::SMC);
    const auto mpf = grouped(FilterKind::MPF);
    REQUIRE(smc.size() == mpf.size());
    bool strict = false;
    for (const auto& [key, sm] : smc) {
        const auto& mm = mpf.at(key);
        CHECK(mm.first == doctest::Approx(sm.first).epsilon(1e-12));
        CHECK(mm.second <= sm.second + 1e-15);
        strict = strict || mm.second < sm.second - 1e-9;
    }
    CHECK(strict);
}

TEST_CASE("log-space safety at T = 200, d = 5") {
    const Lgssm m = lgssm_make(5, 5, 0.42, CMode::Dense, RngStream(6));
    const LgssmModel model(m);
    ParameterSet ps;
    add_lgssm_proposal_params(ps, 200, 5);
    const BoundParams bp(ps, nullptr);
    const LgssmProposal proposal(m, bp);
    StreamRandomness sim_rng(6, 0);
    const Dataset data = simulate(model, 200, sim_rng).data;
    const double log_z = kalman_loglik(m, data);
    CHECK(std::isfinite(log_z));
    for (FilterKind kind : {FilterKind::SMC, FilterKind::MPF, FilterKind::IPF, FilterKind::TMC}) {
        StreamRandomness rng(1, 0);
        const double v = filter_runner(model, proposal, data, kind, plain(8, 2))(rng)
                             .log_evidence()
                             .item();
        CHECK(std::isfinite(v));
        CHECK(v < log_z);
    }
}

TEST_CASE("degenerate weights raise an error naming the step") {
    DiscreteHmm h{{0.5, 0.5}, {{0.5, 0.5}, {0.5, 0.5}}, {{1.0, 0.0}, {1.0, 0.0}}};
    const HmmModel model(h);
    const HmmProposal proposal(reference_hmm_proposal());
    const std::vector<std::size_t> symbols{0, 1};
    const Dataset data = hmm_dataset(symbols);
    StreamRandomness rng(1, 0);
    try {
        run_smc(model, proposal, data, plain(3), rng);
        FAIL("expected a degeneracy error");
    } catch (const DegeneracyError& e) {
        CHECK(e.step() == 1);
    }
    CHECK_THROWS_AS(run_mpf(model, proposal, data, plain(3), rng), DegeneracyError);
}

TEST_CASE("posterior draws") {
    const Lgssm m = scalar_lgssm(0.42);
    const LgssmModel model(m);
    ParameterSet ps;
    add_lgssm_proposal_params(ps, 3, 1);
    const BoundParams bp(ps, nullptr);
    const LgssmProposal proposal(m, bp);
    const Dataset data = scalar_data({0.8, 1.5, -0.3});

    StreamRandomness rng(2, 0);
    const ParticleRun one = run_smc(model, proposal, data, plain(1), rng);
    const Tensor traj = posterior_draw(one, rng, DrawKey{99, 0, Purpose::Ancestor});
    CHECK(traj.rows() == 3);
    CHECK(traj(2, 0) == one.particles[2].value()[0]);

    // Uniform final weights: chi-square over 10^4 draws, 3 degrees of freedom.
    ParticleRun uniform;
    uniform.kind = FilterKind::MPF;
    uniform.particles = {constant(Tensor(4, 1, std::vector<double>{0, 1, 2, 3}))};
    uniform.log_weights = {constant(Tensor(4, 1, 0.0))};
    uniform.log_evidence_steps = {constant(0.0)};
    std::array<double, 4> counts{};
    for (std::uint64_t k = 0; k < 10000; ++k) {
        counts[static_cast<std::size_t>(
            posterior_draw(uniform, rng, DrawKey{0, k, Purpose::Ancestor})[0])] += 1.0;
    }
    double chi2 = 0.0;
    for (double c : counts) {
        chi2 += (c - 2500.0) * (c - 2500.0) / 2500.0;
    }
    CHECK(chi2 < 16.27);

    // Properly weighted filtering mean: E[p_hat sum w_bar x_T] / E[p_hat] = E[x_T | y].
    const KalmanResult kf = kalman_filter(m, data);
    for (FilterKind kind : {FilterKind::SMC, FilterKind::MPF}) {
        const std::size_t runs = 20000;
        std::vector<double> a(runs), b(runs);
        const double log_z = kf.log_likelihood;
        for (std::size_t k = 0; k < runs; ++k) {
            StreamRandomness r(50, k);
            const ParticleRun run =
                filter_runner(model, proposal, data, kind, plain(16))(r);
            const std::vector<double> w = normalized_weights(run.log_weights.back().value());
            double h = 0.0;
            for (std::size_t i = 0; i < w.size(); ++i) {
                h += w[i] * run.particles.back().value()[i];
            }
            b[k] = std::exp(run.log_evidence().item() - log_z);
            a[k] = b[k] * h;
        }
        const double ma = std::accumulate(a.begin(), a.end(), 0.0) / runs;
        const double mb = std::accumulate(b.begin(), b.end(), 0.0) / runs;
        const double ratio = ma / mb;
        double v = 0.0;
        for (std::size_t k = 0; k < runs; ++k) {
            const double r = a[k] - ratio * b[k];
            v += r * r;
        }
        const double se = std::sqrt(v / (runs - 1) / runs) / mb;
        CHECK(std::abs(ratio - kf.filtered_means.back()[0]) < 4.0 * se);
    }
}
