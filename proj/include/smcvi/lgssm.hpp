#pragma once

#include <cstddef>
#include <memory>
#include <vector>

#include "smcvi/params.hpp"
#include "smcvi/ssm.hpp"

namespace smcvi {

enum class CMode { Sparse, Dense };

/// x_t = A x_{t-1} + v_t, y_t = C x_t + e_t with v ~ N(0, Q), e ~ N(0, R),
/// Q and R diagonal (stored as 1xd rows of variances), x_1 ~ N(0, I).
struct Lgssm {
    Tensor a;
    Tensor c;
    Tensor q;
    Tensor r;

    std::size_t state_dim() const { return a.rows(); }
    std::size_t obs_dim() const { return c.rows(); }
};

/// A_ij = alpha^(|i-j|+1), Q = R = I. Sparse C is the dy x dx diagonal
/// embedding (needs dy <= dx); dense C has N(0, 1) entries drawn from `rng`.
Lgssm lgssm_make(std::size_t dx, std::size_t dy, double alpha, CMode mode, RngStream rng);

struct KalmanResult {
    double log_likelihood = 0.0;
    std::vector<std::vector<double>> filtered_means;
    std::vector<std::vector<double>> filtered_covs;  // row-major dx*dx
};

KalmanResult kalman_filter(const Lgssm& m, const Dataset& data);
double kalman_loglik(const Lgssm& m, const Dataset& data);

class LgssmModel final : public StateSpaceModel {
  public:
    explicit LgssmModel(const Lgssm& m);

    std::size_t state_dim() const override { return m_.state_dim(); }
    std::size_t obs_dim() const override { return m_.obs_dim(); }
    std::unique_ptr<ConditionalBatch> initial() const override;
    std::unique_ptr<ConditionalBatch> transition(const TapeVar& prev) const override;
    TapeVar log_observation(const TapeVar& x, const Tensor& y) const override;
    Tensor sample_observation(const Tensor& x, Randomness& rng,
                              std::uint64_t step) const override;

  private:
    Lgssm m_;
    TapeVar a_t_;
    TapeVar c_t_;
    TapeVar q_log_std_;
    TapeVar r_log_std_;
};

/// r_t(x_t | x_{t-1}) = N(mu_t + beta_t * (A x_{t-1}), diag(sigma_t^2)); at
/// t = 0 it is N(mu_0, diag(sigma_0^2)). Parameters "q.mu", "q.beta",
/// "q.log_sigma", each T x dx.
class LgssmProposal final : public Proposal {
  public:
    LgssmProposal(const Lgssm& m, const BoundParams& params);

    std::unique_ptr<ConditionalBatch> conditionals(std::size_t t, const TapeVar* prev,
                                                   const Tensor& y) const override;
    std::unique_ptr<ConditionalBatch> independent(std::size_t t, const Tensor& y) const override;

  private:
    TapeVar a_t_;
    TapeVar mu_;
    TapeVar beta_;
    TapeVar log_sigma_;
};

/// mu = 0, beta = 1, log_sigma = 0.
void add_lgssm_proposal_params(ParameterSet& params, std::size_t steps, std::size_t dx,
                               bool train_beta = true);

}  // namespace smcvi
