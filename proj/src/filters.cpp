#include "smcvi/filters.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "smcvi/error.hpp"

namespace smcvi {

namespace {

void check_weights(const TapeVar& lw, std::size_t step) {
    bool alive = false;
    for (double v : lw.value().values()) {
        if (std::isnan(v)) {
            throw DegeneracyError("NaN particle weight at step " + std::to_string(step), step);
        }
        alive = alive || v > -std::numeric_limits<double>::infinity();
    }
    if (!alive) {
        throw DegeneracyError("all particle weights vanished at step " + std::to_string(step),
                              step);
    }
}

void check_setup(const Dataset& data, const FilterConfig& cfg) {
    require(cfg.particles >= 1, "need at least one particle");
    require(data.steps() >= 1, "need at least one observation");
}

std::vector<std::size_t> draw_ancestors(const Tensor& log_weights, Randomness& rng,
                                        std::uint64_t step) {
    const std::vector<double> w = normalized_weights(log_weights);
    std::vector<std::size_t> a(w.size());
    rng.categorical_many(w, DrawKey{step, 0, Purpose::Ancestor}, a);
    return a;
}

// First step shared by every filter: x_1^i ~ r_1, weight f g / r.
void first_step(const StateSpaceModel& model, const ConditionalBatch& r, const Dataset& data,
                std::size_t n, Randomness& rng, ParticleRun& run) {
    const std::vector<std::size_t> zeros(n, 0);
    const TapeVar x = r.sample(zeros, rng, 0);
    const TapeVar lw =
        (model.initial()->log_density(x) + model.log_observation(x, data.y[0])) -
        r.log_density(x);
    check_weights(lw, 0);
    run.particles.push_back(x);
    run.log_weights.push_back(lw);
    run.log_evidence_steps.push_back(logsumexp(lw) - std::log(static_cast<double>(n)));
}

}  // namespace

std::vector<double> normalized_weights(const Tensor& log_weights) {
    double top = -std::numeric_limits<double>::infinity();
    for (double v : log_weights.values()) {
        top = std::max(top, v);
    }
    double s = 0.0;
    for (double v : log_weights.values()) {
        s += std::exp(v - top);
    }
    const double lse = top + std::log(s);
    std::vector<double> w(log_weights.size());
    for (std::size_t i = 0; i < w.size(); ++i) {
        w[i] = std::exp(log_weights[i] - lse);
    }
    return w;
}

ParticleRun run_smc(const StateSpaceModel& model, const Proposal& proposal, const Dataset& data,
                    const FilterConfig& cfg, Randomness& rng) {
    check_setup(data, cfg);
    require(cfg.grad != GradMode::Unbiased, "SMC has no unbiased gradient mode");
    const std::size_t n = cfg.particles;
    const double log_n = std::log(static_cast<double>(n));
    const std::vector<std::size_t> identity = iota_indices(n);
    ParticleRun run;
    run.kind = FilterKind::SMC;
    run.resampled = cfg.resample;
    run.ancestors.emplace_back();
    first_step(model, *proposal.conditionals(0, nullptr, data.y[0]), data, n, rng, run);
    for (std::size_t t = 1; t < data.steps(); ++t) {
        const TapeVar& x_prev = run.particles.back();
        std::vector<std::size_t> a = identity;
        TapeVar prev = x_prev;
        if (cfg.resample) {
            // Ancestor probabilities are plain numbers: no gradient path.
            a = draw_ancestors(stop_gradient(run.log_weights.back()).value(), rng, t);
            prev = gather_rows(x_prev, a);
        }
        const auto r = proposal.conditionals(t, &prev, data.y[t]);
        const TapeVar x = r->sample(identity, rng, t);
        const TapeVar inc =
            (model.transition(prev)->log_density(x) + model.log_observation(x, data.y[t])) -
            r->log_density(x);
        TapeVar lw = cfg.resample ? inc : run.log_weights.back() + inc;
        check_weights(lw, t);
        run.particles.push_back(x);
        run.ancestors.push_back(std::move(a));
        if (cfg.resample) {
            run.log_evidence_steps.push_back(run.log_evidence_steps.back() +
                                             (logsumexp(lw) - log_n));
        } else {
            run.log_evidence_steps.push_back(logsumexp(lw) - log_n);
        }
        run.log_weights.push_back(std::move(lw));
    }
    return run;
}

ParticleRun run_mpf(const StateSpaceModel& model, const Proposal& proposal, const Dataset& data,
                    const FilterConfig& cfg, Randomness& rng) {
    check_setup(data, cfg);
    const std::size_t n = cfg.particles;
    const double log_n = std::log(static_cast<double>(n));
    ParticleRun run;
    run.kind = FilterKind::MPF;
    first_step(model, *proposal.conditionals(0, nullptr, data.y[0]), data, n, rng, run);
    for (std::size_t t = 1; t < data.steps(); ++t) {
        const TapeVar& x_prev = run.particles.back();
        const TapeVar& lv = run.log_weights.back();
        const TapeVar lv_bar = lv - logsumexp(lv);
        const auto r = proposal.conditionals(t, &x_prev, data.y[t]);
        TapeVar x;
        if (cfg.grad == GradMode::Unbiased) {
            const DiagGaussian* g = r->gaussian();
            require(g != nullptr, "unbiased MPF gradients need diagonal-Gaussian proposals");
            x = mixture_implicit_rsample(GaussianMixture{transpose(lv_bar), *g}, n, rng, t,
                                         cfg.stats);
        } else {
            const auto a = draw_ancestors(stop_gradient(lv_bar).value(), rng, t);
            x = r->sample(a, rng, t);
        }
        const TapeVar log_f = model.transition(x_prev)->log_density_matrix(x);
        const TapeVar log_r = r->log_density_matrix(x);
        const TapeVar prior = broadcast_to(transpose(lv_bar), n, n);
        const TapeVar num = logsumexp(prior + log_f, 1);
        const TapeVar den = logsumexp(prior + log_r, 1);
        TapeVar lv_next = (num + model.log_observation(x, data.y[t])) - den;
        check_weights(lv_next, t);
        run.particles.push_back(x);
        run.log_evidence_steps.push_back(run.log_evidence_steps.back() +
                                         (logsumexp(lv_next) - log_n));
        run.log_weights.push_back(std::move(lv_next));
    }
    return run;
}

std::vector<std::vector<std::size_t>> distinct_permutations(std::size_t n, std::size_t count,
                                                            Randomness& rng, std::uint64_t step) {
    require(count >= 1 && count <= n, "need 1 <= L <= N permutations");
    for (std::uint64_t attempt = 0;; ++attempt) {
        std::vector<std::vector<std::size_t>> perms;
        for (std::size_t l = 0; l < count; ++l) {
            std::vector<std::size_t> p = iota_indices(n);
            for (std::size_t pos = n; pos-- > 1;) {
                const std::vector<double> uniform(pos + 1, 1.0);
                const std::size_t j =
                    rng.categorical(uniform, DrawKey{step, l, Purpose::Permutation,
                                                     attempt * n + pos});
                std::swap(p[pos], p[j]);
            }
            perms.push_back(std::move(p));
        }
        bool distinct = true;
        for (std::size_t i = 0; i < n && distinct; ++i) {
            for (std::size_t l1 = 0; l1 < count && distinct; ++l1) {
                for (std::size_t l2 = l1 + 1; l2 < count; ++l2) {
                    if (perms[l1][i] == perms[l2][i]) {
                        distinct = false;
                        break;
                    }
                }
            }
        }
        if (distinct) {
            return perms;
        }
        rng.reject();
    }
}

ParticleRun run_ipf(const StateSpaceModel& model, const Proposal& proposal, const Dataset& data,
                    const FilterConfig& cfg, Randomness& rng) {
    check_setup(data, cfg);
    const std::size_t n = cfg.particles;
    const std::size_t l_count = cfg.permutations;
    require(l_count >= 1 && l_count <= n, "IPF needs 1 <= L <= N");
    const double log_n = std::log(static_cast<double>(n));
    const double log_l = std::log(static_cast<double>(l_count));
    const std::vector<std::size_t> zeros(n, 0);
    ParticleRun run;
    run.kind = FilterKind::IPF;
    run.matchings.emplace_back();
    first_step(model, *proposal.independent(0, data.y[0]), data, n, rng, run);
    for (std::size_t t = 1; t < data.steps(); ++t) {
        const TapeVar& x_prev = run.particles.back();
        const TapeVar& lu = run.log_weights.back();
        const auto r = proposal.independent(t, data.y[t]);
        const TapeVar x = r->sample(zeros, rng, t);
        auto perms = distinct_permutations(n, l_count, rng, t);
        std::vector<TapeVar> terms;
        for (const auto& k : perms) {
            terms.push_back(gather_rows(lu, k) +
                            model.transition(gather_rows(x_prev, k))->log_density(x));
        }
        const TapeVar matched = logsumexp(concat_cols(terms), 1);
        TapeVar lu_next =
            ((matched + model.log_observation(x, data.y[t])) - log_l) - r->log_density(x);
        check_weights(lu_next, t);
        run.particles.push_back(x);
        run.log_evidence_steps.push_back(logsumexp(lu_next) - log_n);
        run.log_weights.push_back(std::move(lu_next));
        run.matchings.push_back(std::move(perms));
    }
    return run;
}

ParticleRun run_tmc(const StateSpaceModel& model, const Proposal& proposal, const Dataset& data,
                    const FilterConfig& cfg, Randomness& rng) {
    check_setup(data, cfg);
    const std::size_t n = cfg.particles;
    const double log_n = std::log(static_cast<double>(n));
    const std::vector<std::size_t> zeros(n, 0);
    ParticleRun run;
    run.kind = FilterKind::TMC;
    first_step(model, *proposal.independent(0, data.y[0]), data, n, rng, run);
    for (std::size_t t = 1; t < data.steps(); ++t) {
        const TapeVar& x_prev = run.particles.back();
        const TapeVar& lz = run.log_weights.back();
        const auto r = proposal.independent(t, data.y[t]);
        const TapeVar x = r->sample(zeros, rng, t);
        const TapeVar log_f = model.transition(x_prev)->log_density_matrix(x);
        const TapeVar summed = logsumexp(broadcast_to(transpose(lz), n, n) + log_f, 1);
        TapeVar lz_next =
            ((summed + model.log_observation(x, data.y[t])) - log_n) - r->log_density(x);
        check_weights(lz_next, t);
        run.particles.push_back(x);
        run.log_evidence_steps.push_back(logsumexp(lz_next) - log_n);
        run.log_weights.push_back(std::move(lz_next));
    }
    return run;
}

namespace {

double lse(std::span<const double> v) {
    const double top = *std::max_element(v.begin(), v.end());
    if (std::isinf(top) && top < 0) {
        return top;
    }
    double s = 0.0;
    for (double x : v) {
        s += std::exp(x - top);
    }
    return top + std::log(s);
}

}  // namespace

double mpf_tmc_identity_check(const StateSpaceModel& model, const Proposal& proposal,
                              const Dataset& data, const ParticleRun& run) {
    require(run.kind == FilterKind::MPF, "identity check needs an MPF run");
    const std::size_t steps = run.particles.size();
    const std::size_t n = run.size();
    const double log_n = std::log(static_cast<double>(n));
    double worst = 0.0;
    // log z_{t-1}^j, built from the recorded v weights.
    std::vector<double> log_z(run.log_weights[0].value().values().begin(),
                              run.log_weights[0].value().values().end());
    double log_scale = 0.0;  // sum over tau < t of log mean(v_tau)
    for (std::size_t t = 1; t < steps; ++t) {
        const Tensor& lv_prev = run.log_weights[t - 1].value();
        log_scale += lse(lv_prev.values()) - log_n;
        const std::vector<double> v_bar = normalized_weights(lv_prev);
        const TapeVar x_prev = constant(run.particles[t - 1].value());
        const TapeVar x = constant(run.particles[t].value());
        const Tensor log_f = model.transition(x_prev)->log_density_matrix(x).value();
        const Tensor log_r = proposal.conditionals(t, &x_prev, data.y[t])
                                 ->log_density_matrix(x)
                                 .value();
        const Tensor log_g = model.log_observation(x, data.y[t]).value();
        const Tensor& lv = run.log_weights[t].value();
        std::vector<double> next(n), terms(n), mix(n);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                terms[j] = log_z[j] + log_f(i, j);
                mix[j] = std::log(v_bar[j]) + log_r(i, j);
            }
            // Line 6 of the TMC recursion with the MPF mixture as r_t.
            const double tmc = lse(terms) + log_g(i, 0) - log_n - lse(mix);
            const double identity = lv(i, 0) + log_scale;
            worst = std::max(worst, std::abs(tmc - identity));
            next[i] = identity;
        }
        log_z = std::move(next);
    }
    return worst;
}

Tensor smc_trajectory(const ParticleRun& run, std::size_t i) {
    require(run.kind == FilterKind::SMC, "trajectories exist only for SMC runs");
    const std::size_t steps = run.particles.size();
    const std::size_t dx = run.particles.front().cols();
    Tensor out(steps, dx);
    std::size_t k = i;
    for (std::size_t t = steps; t-- > 0;) {
        const auto row = run.particles[t].value().row_span(k);
        std::copy(row.begin(), row.end(), out.row_span(t).begin());
        if (t > 0) {
            k = run.ancestors[t][k];
        }
    }
    return out;
}

Tensor posterior_draw(const ParticleRun& run, Randomness& rng, const DrawKey& key) {
    require(!run.log_weights.empty(), "posterior_draw needs a completed run");
    const std::vector<double> w = normalized_weights(run.log_weights.back().value());
    const std::size_t i = rng.categorical(w, key);
    if (run.kind == FilterKind::SMC) {
        return smc_trajectory(run, i);
    }
    return run.particles.back().value().row_copy(i);
}

}  // namespace smcvi
