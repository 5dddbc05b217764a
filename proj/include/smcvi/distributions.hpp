#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "smcvi/autodiff.hpp"
#include "smcvi/rng.hpp"

namespace smcvi {

inline constexpr double kHalfLog2Pi = 0.91893853320467274178;

/// log N(x; mu, exp(log_std)^2) for one coordinate.
inline double normal_log_density(double x, double mean, double log_std) {
    const double z = (x - mean) * std::exp(-log_std);
    return -0.5 * z * z - log_std - kHalfLog2Pi;
}

/// Standard normal CDF.
double normal_cdf(double z);

/// A batch of diagonal Gaussians, one per row: mean and log_std are MxD.
/// A single distribution is the M = 1 case.
struct DiagGaussian {
    TapeVar mean;
    TapeVar log_std;

    std::size_t size() const { return mean.rows(); }
    std::size_t dim() const { return mean.cols(); }
};

/// Mixture of diagonal Gaussians; log_weights is 1xM and normalized.
struct GaussianMixture {
    TapeVar log_weights;
    DiagGaussian components;
};

/// Counts implicit-gradient samples whose conditional density underflowed;
/// their gradient contribution is dropped.
struct ImplicitGradientStats {
    std::size_t tail_failures = 0;
};

inline constexpr double kTailDensityFloor = 1e-300;

/// Row-wise log densities: row i of `x` under row i of `g` (g may also have a
/// single row shared by every x row). Result is Nx1.
TapeVar gauss_logpdf_rows(const TapeVar& x, const DiagGaussian& g);

/// All-pairs log densities: entry (i, j) is log N(x_i; g_j). Result is NxM.
/// Uses the same per-coordinate arithmetic as gauss_logpdf_rows.
TapeVar gauss_logpdf_pairwise(const TapeVar& x, const DiagGaussian& g);

/// Scalar log density of a 1xD point under a single diagonal Gaussian.
TapeVar diag_gauss_logpdf(const TapeVar& x, const DiagGaussian& g);

/// Reparameterized draw mean + exp(log_std) * eps with eps ~ N(0, I) taken from
/// `key`. `g` must hold one row.
TapeVar diag_gauss_rsample(const DiagGaussian& g, Randomness& rng, const DrawKey& key);

/// Product of two diagonal Gaussian densities, row by row:
///   N(x; a) N(x; b) = exp(log_normalizer) * N(x; fused)
/// with log_normalizer = sum_i log N(mu_a_i; mu_b_i, var_a_i + var_b_i) (Mx1).
std::pair<DiagGaussian, TapeVar> gauss_product_fuse(const DiagGaussian& a, const DiagGaussian& b);

/// Inverse-CDF categorical draw: the smallest index whose cumulative weight
/// exceeds u * total. Zero-weight entries are never selected.
std::size_t categorical_sample(std::span<const double> weights, double u);

/// categorical_sample with the cumulative sums computed once: O(log n) per draw.
class CategoricalTable {
  public:
    explicit CategoricalTable(std::span<const double> weights);
    std::size_t operator()(double u) const;

  private:
    std::vector<double> cumulative_;
    std::size_t last_positive_ = 0;
};

/// log sum_j w_j N(x; comp_j) for a 1xD point.
TapeVar mixture_logpdf(const TapeVar& x, const GaussianMixture& m);

/// Attaches implicit reparameterization gradients to given mixture samples
/// (rows of `samples`). The backward pass differentiates each sample through
/// the coordinate-wise conditional CDFs of the mixture.
TapeVar mixture_implicit_attach(const Tensor& samples, const GaussianMixture& m,
                                ImplicitGradientStats* stats = nullptr);

/// Draws `count` samples from the mixture (component by categorical choice,
/// then a Gaussian draw) and attaches implicit gradients. Row i uses the keys
/// (step, i, Ancestor) and (step, i, Proposal).
TapeVar mixture_implicit_rsample(const GaussianMixture& m, std::size_t count, Randomness& rng,
                                 std::uint64_t step, ImplicitGradientStats* stats = nullptr);

/// sum_i [y_i * logit_i - softplus(logit_i)] per row; y is a 1xD or NxD
/// binary tensor, logits NxD. Result is Nx1.
TapeVar bernoulli_logpmf(const Tensor& y, const TapeVar& logits);

}  // namespace smcvi
