#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "smcvi/autodiff.hpp"
#include "smcvi/distributions.hpp"
#include "smcvi/rng.hpp"

namespace smcvi {

/// M conditional distributions over the same state space, one per
/// conditioning value (previous particle). Points are rows of a tensor.
class ConditionalBatch {
  public:
    virtual ~ConditionalBatch() = default;

    virtual std::size_t size() const = 0;
    virtual std::size_t dim() const = 0;

    /// Row i is drawn from component components[i] with key
    /// (step, first_particle + i, purpose).
    virtual TapeVar sample(std::span<const std::size_t> components, Randomness& rng,
                           std::uint64_t step, Purpose purpose = Purpose::Proposal,
                           std::uint64_t first_particle = 0) const = 0;

    /// Nx1: row i of x under component i, or under the only component when
    /// size() is 1.
    virtual TapeVar log_density(const TapeVar& x) const = 0;

    /// NxM: entry (i, j) is the log density of row i of x under component j.
    virtual TapeVar log_density_matrix(const TapeVar& x) const = 0;

    /// The diagonal-Gaussian form, when the family has one.
    virtual const DiagGaussian* gaussian() const { return nullptr; }
};

class GaussianBatch final : public ConditionalBatch {
  public:
    explicit GaussianBatch(DiagGaussian g);

    std::size_t size() const override { return g_.size(); }
    std::size_t dim() const override { return g_.dim(); }
    TapeVar sample(std::span<const std::size_t> components, Randomness& rng, std::uint64_t step,
                   Purpose purpose, std::uint64_t first_particle) const override;
    TapeVar log_density(const TapeVar& x) const override;
    TapeVar log_density_matrix(const TapeVar& x) const override;
    const DiagGaussian* gaussian() const override { return &g_; }

  private:
    DiagGaussian g_;
};

/// Finite-state conditionals. A state is stored as its index in a 1-column
/// row; log_probs is MxK.
class CategoricalBatch final : public ConditionalBatch {
  public:
    explicit CategoricalBatch(TapeVar log_probs);

    std::size_t size() const override { return log_probs_.rows(); }
    std::size_t dim() const override { return 1; }
    TapeVar sample(std::span<const std::size_t> components, Randomness& rng, std::uint64_t step,
                   Purpose purpose, std::uint64_t first_particle) const override;
    TapeVar log_density(const TapeVar& x) const override;
    TapeVar log_density_matrix(const TapeVar& x) const override;

  private:
    TapeVar log_probs_;
};

/// Initial density f(x_1), transition f(x_t | x_{t-1}) and observation
/// density g(y_t | x_t), batched over particles.
class StateSpaceModel {
  public:
    virtual ~StateSpaceModel() = default;

    virtual std::size_t state_dim() const = 0;
    virtual std::size_t obs_dim() const = 0;
    virtual std::unique_ptr<ConditionalBatch> initial() const = 0;
    virtual std::unique_ptr<ConditionalBatch> transition(const TapeVar& prev) const = 0;
    /// Nx1 log g(y | x_i) for each row of x.
    virtual TapeVar log_observation(const TapeVar& x, const Tensor& y) const = 0;
    virtual Tensor sample_observation(const Tensor& x, Randomness& rng,
                                      std::uint64_t step) const = 0;
};

/// Proposal family r_t. conditionals() gives one conditional per row of prev
/// (or a single one at t = 0 when prev is null); independent() gives the
/// factorized r_t(x_t) used by IPF and TMC.
class Proposal {
  public:
    virtual ~Proposal() = default;

    virtual std::unique_ptr<ConditionalBatch> conditionals(std::size_t t, const TapeVar* prev,
                                                           const Tensor& y) const = 0;
    virtual std::unique_ptr<ConditionalBatch> independent(std::size_t t,
                                                          const Tensor& y) const = 0;
};

struct Dataset {
    std::vector<Tensor> y;  // one 1 x dy row per step
    std::vector<std::pair<std::string, std::string>> metadata;

    std::size_t steps() const noexcept { return y.size(); }
    std::size_t obs_dim() const { return y.empty() ? 0 : y.front().cols(); }
};

struct Simulation {
    std::vector<Tensor> x;
    Dataset data;
};

/// Ancestral sampling of the model for `steps` steps. Latent draws use keys
/// (t, 0, Latent) and observations (t, 0, Observation).
Simulation simulate(const StateSpaceModel& model, std::size_t steps, Randomness& rng);

/// 0, 1, ..., n - 1.
std::vector<std::size_t> iota_indices(std::size_t n);

/// Repeats a 1xC row to n rows (or returns it when n is 1).
TapeVar repeat_row(const TapeVar& row, std::size_t n);

}  // namespace smcvi
