#pragma once

#include <cstddef>
#include <memory>
#include <string>

#include "smcvi/params.hpp"
#include "smcvi/ssm.hpp"

namespace smcvi {

struct DmmDims {
    std::size_t dx = 8;
    std::size_t dy = 20;
    std::size_t dh = 32;
};

/// Adds Linear(in -> out) weights "<prefix>.w" (in x out) and "<prefix>.b"
/// (1 x out), uniform in +-1/sqrt(in).
void add_linear_params(ParameterSet& params, const std::string& prefix, std::size_t in,
                       std::size_t out, RngStream& rng, bool trainable = true);

/// Linear(dh -> out) o LeakyReLU o Linear(in -> dh) with parameters
/// "<prefix>.1.*" and "<prefix>.2.*".
TapeVar mlp2(const BoundParams& params, const std::string& prefix, const TapeVar& x);

/// Generative networks: "dmm.trans" (dx -> 2 dx, giving mu and sigma) and
/// "dmm.emit" (dx -> dy logits).
void add_dmm_params(ParameterSet& params, const DmmDims& dims, RngStream rng,
                    bool trainable = true);
/// Proposal networks: "q.x" (dx -> 2 dx) and "q.y" (dy -> 2 dx).
void add_dmm_proposal_params(ParameterSet& params, const DmmDims& dims, RngStream rng);

/// x_t = mu(x_{t-1}) + exp(sigma(x_{t-1}) / 2) v_t, x_0 = 0,
/// y_t ~ Bernoulli(sigmoid(eta(x_t))).
class DmmModel final : public StateSpaceModel {
  public:
    DmmModel(const BoundParams& params, const DmmDims& dims);

    std::size_t state_dim() const override { return dims_.dx; }
    std::size_t obs_dim() const override { return dims_.dy; }
    std::unique_ptr<ConditionalBatch> initial() const override;
    std::unique_ptr<ConditionalBatch> transition(const TapeVar& prev) const override;
    TapeVar log_observation(const TapeVar& x, const Tensor& y) const override;
    Tensor sample_observation(const Tensor& x, Randomness& rng,
                              std::uint64_t step) const override;

  private:
    const BoundParams* params_;
    DmmDims dims_;
};

/// r(x_t | x_{t-1}, y_t) proportional to
/// N(x_t; mu^x(x_{t-1}), exp(sigma^x)) N(x_t; mu^y(y_t), exp(sigma^y)).
/// The factorized form keeps only the y-network factor.
class DmmProposal final : public Proposal {
  public:
    DmmProposal(const BoundParams& params, const DmmDims& dims);

    std::unique_ptr<ConditionalBatch> conditionals(std::size_t t, const TapeVar* prev,
                                                   const Tensor& y) const override;
    std::unique_ptr<ConditionalBatch> independent(std::size_t t, const Tensor& y) const override;

  private:
    DiagGaussian y_factor(const Tensor& y) const;

    const BoundParams* params_;
    DmmDims dims_;
};

}  // namespace smcvi
