#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "smcvi/filters.hpp"
#include "smcvi/params.hpp"
#include "smcvi/ssm.hpp"

namespace smcvi {

enum class ObjectiveKind { IWVI, VSMC, TMC, VMPF_BG, VMPF_UG };

std::string to_string(ObjectiveKind kind);
ObjectiveKind parse_objective(const std::string& name);

/// A model family bound to data: the parameter set (theta and phi together)
/// and factories that build the model and proposal from bound parameters.
/// Bound parameters must outlive the objects built from them.
struct Problem {
    ParameterSet params;
    std::function<std::unique_ptr<StateSpaceModel>(const BoundParams&)> make_model;
    std::function<std::unique_ptr<Proposal>(const BoundParams&)> make_proposal;
    Dataset data;
};

struct Objective {
    ObjectiveKind kind = ObjectiveKind::VSMC;
    std::size_t particles = 4;
};

/// One draw of log p_hat for the objective's filter, differentiable through
/// whatever the gradient mode of the kind keeps.
ParticleRun objective_run(const Objective& obj, const StateSpaceModel& model,
                          const Proposal& proposal, const Dataset& data, Randomness& rng,
                          ImplicitGradientStats* stats = nullptr);
TapeVar objective_value(const Objective& obj, const StateSpaceModel& model,
                        const Proposal& proposal, const Dataset& data, Randomness& rng,
                        ImplicitGradientStats* stats = nullptr);

/// log p_hat at the problem's current parameters, without recording a tape.
double objective_sample(const Objective& obj, const Problem& problem, Randomness& rng);

struct GradientSample {
    double value = 0.0;
    /// One tensor per parameter entry, zero for non-trainable ones.
    std::vector<Tensor> grads;
    std::size_t tail_failures = 0;
};

/// Reverse-mode gradient of one objective draw. Biased kinds cut the
/// categorical selection probabilities; VMPF-UG keeps every path.
GradientSample objective_gradient(const Objective& obj, const Problem& problem, Randomness& rng);
GradientSample gradient_biased(const Objective& obj, const Problem& problem, Randomness& rng);
GradientSample gradient_unbiased(const Objective& obj, const Problem& problem, Randomness& rng);

double global_norm(const std::vector<Tensor>& grads);

class NonFiniteGradient : public std::runtime_error {
  public:
    NonFiniteGradient(const std::string& parameter)
        : std::runtime_error("non-finite gradient for parameter " + parameter),
          parameter_(parameter) {}
    const std::string& parameter() const noexcept { return parameter_; }

  private:
    std::string parameter_;
};

struct AdamOptions {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::optional<double> clip;
};

class Adam {
  public:
    Adam(const ParameterSet& params, AdamOptions options = {});

    /// One bias-corrected update of every trainable entry. With a clip
    /// threshold the gradients are first rescaled to at most that global norm.
    void step(ParameterSet& params, std::vector<Tensor> grads, double learning_rate);
    std::size_t steps() const noexcept { return steps_; }

  private:
    AdamOptions options_;
    std::vector<Tensor> m_;
    std::vector<Tensor> v_;
    std::size_t steps_ = 0;
};

struct Stage {
    double learning_rate = 0.01;
    std::size_t iterations = 0;
};

struct TrainRecord {
    std::size_t iter = 0;
    double objective = 0.0;
    double grad_norm = 0.0;
    double grad_var = std::numeric_limits<double>::quiet_NaN();
    double wall_ms = 0.0;
};

struct TrainOptions {
    std::vector<Stage> schedule;
    std::uint64_t seed = 0;
    std::optional<double> clip;
    /// Probe the gradient variance every `probe_every` iterations (0 = never).
    std::size_t probe_every = 0;
    std::size_t probe_samples = 10;
    /// Runs whose gradient norm exceeds this are stopped and reported.
    double max_grad_norm = 1e6;
};

struct TrainFailure {
    std::size_t iter = 0;
    std::string cause;
};

struct TrainResult {
    std::vector<TrainRecord> records;
    std::optional<TrainFailure> failure;
    std::size_t tail_failures = 0;
};

/// Adam ascent on the objective over the schedule. Iteration k draws its
/// randomness from stream k of the seed, so identical seeds give identical
/// records (apart from wall time). Problem parameters are updated in place.
TrainResult train(const Objective& obj, Problem& problem, const TrainOptions& options);

void write_train_csv(const std::vector<TrainRecord>& records, const std::filesystem::path& path);

struct BoundEstimate {
    double mean = 0.0;
    double se = 0.0;
    std::vector<double> samples;
};

/// Mean and standard error of log p_hat over n independent runs, spread over
/// `threads` workers (0 = hardware concurrency) and reduced in run order.
BoundEstimate bound_estimate(const Objective& obj, const Problem& problem, std::size_t n,
                             std::uint64_t seed, std::size_t threads = 0);

/// Per-coordinate sample variance of n independent gradients, averaged over
/// the trainable scalars.
double grad_variance_probe(const Objective& obj, const Problem& problem, std::size_t n,
                           std::uint64_t seed, std::size_t threads = 0);

/// Runs fn(i) for i in [0, n) over a pool of threads.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

}  // namespace smcvi
