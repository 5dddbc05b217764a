#pragma once

#include <cstddef>
#include <memory>

#include "smcvi/params.hpp"
#include "smcvi/ssm.hpp"

namespace smcvi {

enum class BMode { Diagonal, Triangular };

/// x_t = mu + Phi (x_{t-1} - mu) + v_t, y_t = diag(exp(x_t / 2)) B e_t with
/// v ~ N(0, Q), e ~ N(0, I), x_1 ~ N(mu, Q). Stored on the constrained scale;
/// Phi and Q are diagonals given as 1xd rows, B is lower triangular.
struct StochVolTruth {
    Tensor mu;
    Tensor phi;
    Tensor q;
    Tensor b;
};

StochVolTruth default_stochvol(std::size_t d, BMode mode, RngStream rng);

/// Adds theta on the unconstrained scale: "sv.mu", "sv.phi" (logit),
/// "sv.log_q", "sv.b_logdiag" and, for triangular B, "sv.b_lower" (only the
/// strictly lower part is used). With `noise` > 0 every entry is perturbed by
/// N(0, noise^2) drawn from `rng`.
void add_stochvol_params(ParameterSet& params, const StochVolTruth& truth, BMode mode,
                         bool trainable, double noise, RngStream rng);

/// Rows z solving B z = u for each row u of `u`, i.e. Z = U B^{-T}, with B
/// lower triangular. Differentiable in both arguments.
TapeVar solve_lower_rows(const TapeVar& b, const TapeVar& u);

class StochVolModel final : public StateSpaceModel {
  public:
    StochVolModel(const BoundParams& params, BMode mode);

    std::size_t state_dim() const override { return mu_.cols(); }
    std::size_t obs_dim() const override { return mu_.cols(); }
    std::unique_ptr<ConditionalBatch> initial() const override;
    std::unique_ptr<ConditionalBatch> transition(const TapeVar& prev) const override;
    TapeVar log_observation(const TapeVar& x, const Tensor& y) const override;
    Tensor sample_observation(const Tensor& x, Randomness& rng,
                              std::uint64_t step) const override;

    /// f(x_t | x_{t-1}) for each row of prev, or f(x_1) when prev is null.
    DiagGaussian prior(const TapeVar* prev) const;

  private:
    TapeVar mu_;
    TapeVar phi_;
    TapeVar q_log_std_;
    TapeVar b_;
    TapeVar b_logdiag_;
};

/// r_t(x_t | x_{t-1}) proportional to f(x_t | x_{t-1}) N(x_t; mu_t, Sigma_t),
/// with "q.mu" and "q.log_var" (T x d). The factorized form is N(mu_t, Sigma_t).
class StochVolProposal final : public Proposal {
  public:
    StochVolProposal(const BoundParams& params, BMode mode);

    std::unique_ptr<ConditionalBatch> conditionals(std::size_t t, const TapeVar* prev,
                                                   const Tensor& y) const override;
    std::unique_ptr<ConditionalBatch> independent(std::size_t t, const Tensor& y) const override;

  private:
    StochVolModel model_;
    TapeVar mu_;
    TapeVar log_var_;
};

void add_stochvol_proposal_params(ParameterSet& params, std::size_t steps, std::size_t d);

}  // namespace smcvi
