#include "smcvi/distributions.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numbers>
#include <vector>

#include "smcvi/error.hpp"

namespace smcvi {

namespace {

constexpr double kInvSqrt2Pi = 0.39894228040143267794;

double std_normal_pdf(double z) { return kInvSqrt2Pi * std::exp(-0.5 * z * z); }

void check_gaussian(const DiagGaussian& g) {
    require(g.mean.rows() == g.log_std.rows() && g.mean.cols() == g.log_std.cols(),
            "Gaussian mean and log_std shapes differ");
}

}  // namespace

double normal_cdf(double z) { return 0.5 * std::erfc(-z * std::numbers::sqrt2 / 2.0); }

TapeVar gauss_logpdf_rows(const TapeVar& x, const DiagGaussian& g) {
    check_gaussian(g);
    const Tensor& xv = x.value();
    const Tensor& mu = g.mean.value();
    const Tensor& ls = g.log_std.value();
    require(mu.cols() == xv.cols(), "Gaussian dimension does not match the point");
    require(mu.rows() == xv.rows() || mu.rows() == 1, "Gaussian rows must match point rows");
    const bool shared = mu.rows() != xv.rows();
    const std::size_t n = xv.rows();
    const std::size_t d = xv.cols();
    Tensor out(n, 1);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t k = shared ? 0 : i;
        double s = 0.0;
        for (std::size_t e = 0; e < d; ++e) {
            s += normal_log_density(xv(i, e), mu(k, e), ls(k, e));
        }
        out(i, 0) = s;
    }
    if (x.is_constant() && g.mean.is_constant() && g.log_std.is_constant()) {
        return TapeVar(std::move(out));
    }
    return custom_vjp(std::move(out), {x, g.mean, g.log_std},
                      [x, g, shared](const Tensor& ct) {
                          const Tensor& xv = x.value();
                          const Tensor& mu = g.mean.value();
                          const Tensor& ls = g.log_std.value();
                          Tensor gx(xv.rows(), xv.cols());
                          Tensor gmu(mu.rows(), mu.cols());
                          Tensor gls(ls.rows(), ls.cols());
                          for (std::size_t i = 0; i < xv.rows(); ++i) {
                              const std::size_t k = shared ? 0 : i;
                              for (std::size_t e = 0; e < xv.cols(); ++e) {
                                  const double inv = std::exp(-ls(k, e));
                                  const double z = (xv(i, e) - mu(k, e)) * inv;
                                  gx(i, e) = -ct(i, 0) * z * inv;
                                  gmu(k, e) += ct(i, 0) * z * inv;
                                  gls(k, e) += ct(i, 0) * (z * z - 1.0);
                              }
                          }
                          return std::vector<Tensor>{std::move(gx), std::move(gmu),
                                                     std::move(gls)};
                      });
}

TapeVar gauss_logpdf_pairwise(const TapeVar& x, const DiagGaussian& g) {
    check_gaussian(g);
    const Tensor& xv = x.value();
    const Tensor& mu = g.mean.value();
    const Tensor& ls = g.log_std.value();
    require(mu.cols() == xv.cols(), "Gaussian dimension does not match the points");
    const std::size_t n = xv.rows();
    const std::size_t m = mu.rows();
    const std::size_t d = xv.cols();
    Tensor out(n, m);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            double s = 0.0;
            for (std::size_t e = 0; e < d; ++e) {
                s += normal_log_density(xv(i, e), mu(j, e), ls(j, e));
            }
            out(i, j) = s;
        }
    }
    if (x.is_constant() && g.mean.is_constant() && g.log_std.is_constant()) {
        return TapeVar(std::move(out));
    }
    return custom_vjp(std::move(out), {x, g.mean, g.log_std}, [x, g](const Tensor& ct) {
        const Tensor& xv = x.value();
        const Tensor& mu = g.mean.value();
        const Tensor& ls = g.log_std.value();
        Tensor gx(xv.rows(), xv.cols());
        Tensor gmu(mu.rows(), mu.cols());
        Tensor gls(ls.rows(), ls.cols());
        for (std::size_t j = 0; j < mu.rows(); ++j) {
            for (std::size_t e = 0; e < xv.cols(); ++e) {
                const double inv = std::exp(-ls(j, e));
                for (std::size_t i = 0; i < xv.rows(); ++i) {
                    const double c = ct(i, j);
                    if (c == 0.0) {
                        continue;
                    }
                    const double z = (xv(i, e) - mu(j, e)) * inv;
                    gx(i, e) -= c * z * inv;
                    gmu(j, e) += c * z * inv;
                    gls(j, e) += c * (z * z - 1.0);
                }
            }
        }
        return std::vector<Tensor>{std::move(gx), std::move(gmu), std::move(gls)};
    });
}

TapeVar diag_gauss_logpdf(const TapeVar& x, const DiagGaussian& g) {
    require(x.rows() == 1 && g.size() == 1, "diag_gauss_logpdf takes a single point");
    return gauss_logpdf_rows(x, g);
}

TapeVar diag_gauss_rsample(const DiagGaussian& g, Randomness& rng, const DrawKey& key) {
    check_gaussian(g);
    require(g.size() == 1, "diag_gauss_rsample draws from a single Gaussian");
    Tensor eps(1, g.dim());
    rng.normals(key, eps.values());
    return g.mean + exp(g.log_std) * constant(std::move(eps));
}

std::pair<DiagGaussian, TapeVar> gauss_product_fuse(const DiagGaussian& a, const DiagGaussian& b) {
    check_gaussian(a);
    check_gaussian(b);
    require(a.dim() == b.dim() && a.size() == b.size(), "fused Gaussians must share shape");
    const TapeVar prec_a = exp(-2.0 * a.log_std);
    const TapeVar prec_b = exp(-2.0 * b.log_std);
    const TapeVar prec = prec_a + prec_b;
    const TapeVar log_std = -0.5 * log(prec);
    const TapeVar mean = (a.mean * prec_a + b.mean * prec_b) / prec;
    // log N(mu_a; mu_b, var_a + var_b), summed over coordinates.
    const TapeVar joint_log_std = 0.5 * log(exp(2.0 * a.log_std) + exp(2.0 * b.log_std));
    const TapeVar log_normalizer = gauss_logpdf_rows(a.mean, DiagGaussian{b.mean, joint_log_std});
    return {DiagGaussian{mean, log_std}, log_normalizer};
}

std::size_t categorical_sample(std::span<const double> weights, double u) {
    return CategoricalTable(weights)(u);
}

CategoricalTable::CategoricalTable(std::span<const double> weights) {
    cumulative_.reserve(weights.size());
    double total = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        const double w = weights[i];
        require(w >= 0.0 && std::isfinite(w), "categorical weights must be finite and >= 0");
        total += w;
        cumulative_.push_back(total);
        if (w > 0.0) {
            last_positive_ = i;
        }
    }
    if (!(total > 0.0)) {
        throw DegeneracyError("categorical weights are all zero", 0);
    }
}

std::size_t CategoricalTable::operator()(double u) const {
    // The first strict increase past the target has positive weight.
    const double target = u * cumulative_.back();
    const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), target);
    if (it == cumulative_.end()) {
        return last_positive_;
    }
    return static_cast<std::size_t>(it - cumulative_.begin());
}

TapeVar mixture_logpdf(const TapeVar& x, const GaussianMixture& m) {
    require(x.rows() == 1, "mixture_logpdf takes a single point");
    require(m.log_weights.rows() == 1 && m.log_weights.cols() == m.components.size(),
            "mixture weights must be 1xM");
    const TapeVar per_component = gauss_logpdf_pairwise(x, m.components);
    return logsumexp(per_component + m.log_weights);
}

namespace {

struct ImplicitRowGradient {
    std::vector<double> log_weights;
    std::vector<double> mean;
    std::vector<double> log_std;
};

// Cotangents of one sample x with incoming cotangent g, through the
// distributional transform F_e(x_e | x_<e) = sum_j pi_j^(e) Phi(z_je).
void implicit_row_backward(std::span<const double> x, std::span<const double> g,
                           const Tensor& lw, const Tensor& mu, const Tensor& ls,
                           ImplicitRowGradient& out) {
    const std::size_t m = mu.rows();
    const std::size_t d = mu.cols();
    std::vector<double> z(m * d), sigma(m * d), cdf(m * d), pdf(m * d), loglik(m * d);
    for (std::size_t j = 0; j < m; ++j) {
        for (std::size_t e = 0; e < d; ++e) {
            const std::size_t k = j * d + e;
            sigma[k] = std::exp(ls(j, e));
            z[k] = (x[e] - mu(j, e)) / sigma[k];
            cdf[k] = normal_cdf(z[k]);
            pdf[k] = std_normal_pdf(z[k]);
            loglik[k] = normal_log_density(x[e], mu(j, e), ls(j, e));
        }
    }
    // pi[e][j]: posterior over components given the first e coordinates.
    std::vector<double> pi(d * m), big_f(d), density(d);
    std::vector<double> log_a(lw.values().begin(), lw.values().end());
    for (std::size_t e = 0; e < d; ++e) {
        const double top = *std::max_element(log_a.begin(), log_a.end());
        double norm = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
            pi[e * m + j] = std::exp(log_a[j] - top);
            norm += pi[e * m + j];
        }
        double f = 0.0;
        double p = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
            pi[e * m + j] /= norm;
            f += pi[e * m + j] * cdf[j * d + e];
            p += pi[e * m + j] * pdf[j * d + e] / sigma[j * d + e];
        }
        big_f[e] = f;
        density[e] = p;
        for (std::size_t j = 0; j < m; ++j) {
            log_a[j] += loglik[j * d + e];
        }
    }
    // Lower-triangular Jacobian of F with respect to x:
    //   L[e][e] = conditional pdf, L[e][e'] = sum_j pi_j^(e) s_je' (Phi_je - F_e).
    std::vector<double> lower(d * d, 0.0);
    for (std::size_t e = 0; e < d; ++e) {
        lower[e * d + e] = density[e];
        for (std::size_t ep = 0; ep < e; ++ep) {
            double s = 0.0;
            for (std::size_t j = 0; j < m; ++j) {
                const double score = -z[j * d + ep] / sigma[j * d + ep];
                s += pi[e * m + j] * score * (cdf[j * d + e] - big_f[e]);
            }
            lower[e * d + ep] = s;
        }
    }
    // Solve L^T lambda = g by back substitution.
    std::vector<double> lambda(d);
    for (std::size_t e = d; e-- > 0;) {
        double r = g[e];
        for (std::size_t later = e + 1; later < d; ++later) {
            r -= lower[later * d + e] * lambda[later];
        }
        lambda[e] = r / lower[e * d + e];
    }
    // theta-cotangent = -sum_e lambda_e dF_e/dtheta.
    for (std::size_t j = 0; j < m; ++j) {
        double tail = 0.0;  // sum over e'' > e of lambda_e'' * c_je''
        for (std::size_t e = d; e-- > 0;) {
            const std::size_t k = j * d + e;
            const double w = pi[e * m + j];
            const double c = w * (cdf[k] - big_f[e]);
            out.log_weights[j] -= lambda[e] * c;
            out.mean[k] -= lambda[e] * w * (-pdf[k] / sigma[k]) + tail * z[k] / sigma[k];
            out.log_std[k] -= lambda[e] * w * (-z[k] * pdf[k]) + tail * (z[k] * z[k] - 1.0);
            tail += lambda[e] * c;
        }
    }
}

bool conditional_density_underflows(std::span<const double> x, const Tensor& lw, const Tensor& mu,
                                    const Tensor& ls) {
    const std::size_t m = mu.rows();
    const std::size_t d = mu.cols();
    std::vector<double> log_a(lw.values().begin(), lw.values().end());
    const double floor = std::log(kTailDensityFloor);
    for (std::size_t e = 0; e < d; ++e) {
        const double top_a = *std::max_element(log_a.begin(), log_a.end());
        double norm = 0.0;
        for (double v : log_a) {
            norm += std::exp(v - top_a);
        }
        const double log_norm = top_a + std::log(norm);
        double top = -std::numeric_limits<double>::infinity();
        std::vector<double> terms(m);
        for (std::size_t j = 0; j < m; ++j) {
            terms[j] = log_a[j] - log_norm + normal_log_density(x[e], mu(j, e), ls(j, e));
            top = std::max(top, terms[j]);
        }
        double s = 0.0;
        for (double t : terms) {
            s += std::exp(t - top);
        }
        if (!(top + std::log(s) >= floor)) {
            return true;
        }
        for (std::size_t j = 0; j < m; ++j) {
            log_a[j] += normal_log_density(x[e], mu(j, e), ls(j, e));
        }
    }
    return false;
}

}  // namespace

TapeVar mixture_implicit_attach(const Tensor& samples, const GaussianMixture& m,
                                ImplicitGradientStats* stats) {
    check_gaussian(m.components);
    require(samples.cols() == m.components.dim(), "sample dimension does not match mixture");
    require(m.log_weights.rows() == 1 && m.log_weights.cols() == m.components.size(),
            "mixture weights must be 1xM");
    if (m.log_weights.is_constant() && m.components.mean.is_constant() &&
        m.components.log_std.is_constant()) {
        return TapeVar(samples);
    }
    auto skip = std::make_shared<std::vector<bool>>(samples.rows(), false);
    for (std::size_t i = 0; i < samples.rows(); ++i) {
        if (conditional_density_underflows(samples.row_span(i), m.log_weights.value(),
                                           m.components.mean.value(),
                                           m.components.log_std.value())) {
            (*skip)[i] = true;
            if (stats != nullptr) {
                ++stats->tail_failures;
            }
        }
    }
    auto x = std::make_shared<const Tensor>(samples);
    return custom_vjp(samples, {m.log_weights, m.components.mean, m.components.log_std},
                      [x, m, skip](const Tensor& ct) {
                          const Tensor& lw = m.log_weights.value();
                          const Tensor& mu = m.components.mean.value();
                          const Tensor& ls = m.components.log_std.value();
                          ImplicitRowGradient acc{std::vector<double>(lw.size(), 0.0),
                                                  std::vector<double>(mu.size(), 0.0),
                                                  std::vector<double>(ls.size(), 0.0)};
                          for (std::size_t i = 0; i < x->rows(); ++i) {
                              if ((*skip)[i]) {
                                  continue;
                              }
                              implicit_row_backward(x->row_span(i), ct.row_span(i), lw, mu, ls,
                                                    acc);
                          }
                          return std::vector<Tensor>{
                              Tensor(lw.rows(), lw.cols(), std::move(acc.log_weights)),
                              Tensor(mu.rows(), mu.cols(), std::move(acc.mean)),
                              Tensor(ls.rows(), ls.cols(), std::move(acc.log_std))};
                      });
}

TapeVar mixture_implicit_rsample(const GaussianMixture& m, std::size_t count, Randomness& rng,
                                 std::uint64_t step, ImplicitGradientStats* stats) {
    const Tensor& lw = m.log_weights.value();
    const Tensor& mu = m.components.mean.value();
    const Tensor& ls = m.components.log_std.value();
    std::vector<double> probs(lw.size());
    for (std::size_t j = 0; j < lw.size(); ++j) {
        probs[j] = std::exp(lw[j]);
    }
    Tensor samples(count, mu.cols());
    std::vector<double> eps(mu.cols());
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t j = rng.categorical(probs, DrawKey{step, i, Purpose::Ancestor});
        rng.normals(DrawKey{step, i, Purpose::Proposal}, eps);
        for (std::size_t e = 0; e < mu.cols(); ++e) {
            samples(i, e) = mu(j, e) + std::exp(ls(j, e)) * eps[e];
        }
    }
    return mixture_implicit_attach(samples, m, stats);
}

TapeVar bernoulli_logpmf(const Tensor& y, const TapeVar& logits) {
    require(y.cols() == logits.cols() && (y.rows() == 1 || y.rows() == logits.rows()),
            "Bernoulli observation shape does not match logits");
    for (double v : y.values()) {
        require(v == 0.0 || v == 1.0, "Bernoulli observations must be 0 or 1");
    }
    const TapeVar yy = constant(y.rows() == logits.rows() ? y : [&] {
        Tensor t(logits.rows(), y.cols());
        for (std::size_t r = 0; r < t.rows(); ++r) {
            std::copy(y.values().begin(), y.values().end(), t.row_span(r).begin());
        }
        return t;
    }());
    return sum(yy * logits - softplus(logits), 1);
}

}  // namespace smcvi
