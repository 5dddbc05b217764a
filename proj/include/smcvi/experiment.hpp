#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "smcvi/dmm.hpp"
#include "smcvi/lgssm.hpp"
#include "smcvi/objectives.hpp"
#include "smcvi/stochvol.hpp"

namespace smcvi {

/// LGSSM with Gaussian proposals mu_t + beta_t * A x_prev; beta is frozen at 1
/// when !train_beta.
Problem lgssm_problem(const Lgssm& m, Dataset data, bool train_beta);

/// Stochastic volatility with the fused proposal. theta starts at the
/// generating values perturbed by N(0, noise^2) and is learned when learn_theta.
Problem stochvol_problem(const StochVolTruth& truth, BMode mode, Dataset data, bool learn_theta,
                         double noise, std::uint64_t seed);

/// Deep Markov model: generative networks from `model_seed` (the data
/// generator), proposal networks from `proposal_seed`.
Problem dmm_problem(const DmmDims& dims, Dataset data, bool learn_theta, std::uint64_t model_seed,
                    std::uint64_t proposal_seed);

enum class ModelKind { LGSSM, StochVol, DMM };

struct ModelSpec {
    ModelKind kind = ModelKind::LGSSM;
    std::size_t dx = 10;
    std::size_t dy = 10;
    std::size_t dh = 32;
    double alpha = 0.42;
    CMode c_mode = CMode::Sparse;
    BMode b_mode = BMode::Diagonal;
    bool train_beta = true;
    bool learn_theta = false;
    double theta_noise = 0.1;
};

struct ExperimentConfig {
    ModelSpec model;
    std::size_t steps = 10;
    ObjectiveKind objective = ObjectiveKind::VSMC;
    std::size_t particles = 4;
    std::vector<Stage> schedule{{0.01, 10000}, {0.001, 10000}};
    /// Absent from the JSON: off, except 100 for stochastic volatility.
    std::optional<double> clip;
    std::uint64_t seed = 1;
    std::uint64_t data_seed = 1;
    std::size_t eval_samples = 1000;
    std::size_t probe_every = 0;
    std::size_t probe_samples = 10;
    std::string out_dir = "out";
};

/// Parses the JSON config. Unknown keys anywhere are errors.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Canonical JSON of every field (defaults filled in), and its FNV-1a hash.
std::string canonical_json(const ExperimentConfig& cfg);
std::string config_hash(const ExperimentConfig& cfg);

/// The generating model's fixed parts, determined by data_seed.
Lgssm config_lgssm(const ExperimentConfig& cfg);
StochVolTruth config_stochvol(const ExperimentConfig& cfg);

/// Synthetic data for the config; identical configs give identical data.
Dataset generate_dataset(const ExperimentConfig& cfg);
Problem build_problem(const ExperimentConfig& cfg, Dataset data);
Objective config_objective(const ExperimentConfig& cfg);

/// Exact log-likelihood when the model has an oracle (LGSSM).
std::optional<double> exact_loglik(const ExperimentConfig& cfg, const Dataset& data);

}  // namespace smcvi
