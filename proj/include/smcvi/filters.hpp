#pragma once

#include <cstddef>
#include <vector>

#include "smcvi/autodiff.hpp"
#include "smcvi/distributions.hpp"
#include "smcvi/rng.hpp"
#include "smcvi/ssm.hpp"

namespace smcvi {

enum class FilterKind { SMC, MPF, IPF, TMC };
enum class GradMode { None, Biased, Unbiased };

struct FilterConfig {
    std::size_t particles = 1;
    GradMode grad = GradMode::Biased;
    /// SMC only: false keeps every particle on its own path and accumulates
    /// weights, which is importance-weighted VI.
    bool resample = true;
    /// IPF only: number of permutations L.
    std::size_t permutations = 1;
    ImplicitGradientStats* stats = nullptr;
};

struct ParticleRun {
    FilterKind kind = FilterKind::SMC;
    bool resampled = true;
    std::vector<TapeVar> particles;    // per step, N x dx
    std::vector<TapeVar> log_weights;  // per step, N x 1 (cumulative when not resampling)
    /// Estimate of log p(y_{1:t}) after each step; the last entry is the
    /// run's log-evidence estimate.
    std::vector<TapeVar> log_evidence_steps;
    /// SMC: ancestors[t][i] is the index at step t-1 extended by particle i at
    /// step t (ancestors[0] is empty).
    std::vector<std::vector<std::size_t>> ancestors;
    /// IPF: per step, the L permutations used.
    std::vector<std::vector<std::vector<std::size_t>>> matchings;

    const TapeVar& log_evidence() const { return log_evidence_steps.back(); }
    std::size_t size() const { return particles.empty() ? 0 : particles.front().rows(); }
};

/// Normalized weights exp(lw - logsumexp(lw)) of an Nx1 log-weight column,
/// the only place weights leave log space.
std::vector<double> normalized_weights(const Tensor& log_weights);

/// Algorithm 1 (and, with resample = false, importance-weighted VI).
ParticleRun run_smc(const StateSpaceModel& model, const Proposal& proposal, const Dataset& data,
                    const FilterConfig& cfg, Randomness& rng);

/// Algorithm 2. Biased mode draws an ancestor then a component; unbiased mode
/// draws from the mixture with implicit reparameterization gradients.
ParticleRun run_mpf(const StateSpaceModel& model, const Proposal& proposal, const Dataset& data,
                    const FilterConfig& cfg, Randomness& rng);

/// Independent particle filter with cfg.permutations matchings per step.
ParticleRun run_ipf(const StateSpaceModel& model, const Proposal& proposal, const Dataset& data,
                    const FilterConfig& cfg, Randomness& rng);

/// Tensor Monte Carlo with factorized proposals.
ParticleRun run_tmc(const StateSpaceModel& model, const Proposal& proposal, const Dataset& data,
                    const FilterConfig& cfg, Randomness& rng);

/// L permutations of 0..n-1 whose columns hold distinct entries, by
/// Fisher-Yates per permutation and rejection of the whole set.
std::vector<std::vector<std::size_t>> distinct_permutations(std::size_t n, std::size_t count,
                                                            Randomness& rng, std::uint64_t step);

/// Recomputes z_t^i = v_t^i prod_{tau<t} mean(v_tau) from an MPF run and checks
/// the TMC recursion under the mixture proposal sum_j vbar_{t-1}^j r_t(x | x_{t-1}^j).
/// Returns the largest absolute log discrepancy.
double mpf_tmc_identity_check(const StateSpaceModel& model, const Proposal& proposal,
                              const Dataset& data, const ParticleRun& run);

/// One atom from the final normalized weights: the full trajectory (T x dx)
/// for SMC, x_T (1 x dx) otherwise.
Tensor posterior_draw(const ParticleRun& run, Randomness& rng, const DrawKey& key);

/// Trajectory of final particle i, following the ancestor indices back.
Tensor smc_trajectory(const ParticleRun& run, std::size_t i);

}  // namespace smcvi
