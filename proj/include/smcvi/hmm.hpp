#pragma once

#include <cstddef>
#include <memory>
#include <vector>

#include "smcvi/ssm.hpp"

namespace smcvi {

/// Finite-state HMM: K hidden states, M observation symbols. Observations
/// are 1x1 tensors holding the symbol index.
struct DiscreteHmm {
    std::vector<double> initial;                  // K
    std::vector<std::vector<double>> transition;  // K x K
    std::vector<std::vector<double>> emission;    // K x M

    std::size_t states() const { return initial.size(); }
    std::size_t symbols() const { return emission.empty() ? 0 : emission.front().size(); }
    void validate() const;
};

/// Exact log p(y_{1:T}) by the forward recursion in log space.
double hmm_forward(const DiscreteHmm& h, std::span<const std::size_t> symbols);

/// Unnormalized filtering weights log p(x_T = k, y_{1:T}) for each k.
std::vector<double> hmm_forward_joint(const DiscreteHmm& h, std::span<const std::size_t> symbols);

Dataset hmm_dataset(std::span<const std::size_t> symbols);

class HmmModel final : public StateSpaceModel {
  public:
    explicit HmmModel(DiscreteHmm h);

    std::size_t state_dim() const override { return 1; }
    std::size_t obs_dim() const override { return 1; }
    std::unique_ptr<ConditionalBatch> initial() const override;
    std::unique_ptr<ConditionalBatch> transition(const TapeVar& prev) const override;
    TapeVar log_observation(const TapeVar& x, const Tensor& y) const override;
    Tensor sample_observation(const Tensor& x, Randomness& rng,
                              std::uint64_t step) const override;

  private:
    DiscreteHmm h_;
    Tensor log_trans_;
};

/// Discrete proposal tables: r_1 = first, r_t(. | x_{t-1}) = rows of
/// `transition`, and the factorized r_t = `independent`.
struct DiscreteProposalTables {
    std::vector<double> first;
    std::vector<std::vector<double>> transition;
    std::vector<double> independent;
};

class HmmProposal final : public Proposal {
  public:
    explicit HmmProposal(DiscreteProposalTables tables);

    std::unique_ptr<ConditionalBatch> conditionals(std::size_t t, const TapeVar* prev,
                                                   const Tensor& y) const override;
    std::unique_ptr<ConditionalBatch> independent(std::size_t t, const Tensor& y) const override;

  private:
    DiscreteProposalTables tables_;
};

/// The two-state reference instance: pi0 = [.5, .5], T = [[.9, .1], [.1, .9]],
/// p(symbol 0 | state) = [.8, .3].
DiscreteHmm reference_hmm();
DiscreteProposalTables reference_hmm_proposal();

}  // namespace smcvi
