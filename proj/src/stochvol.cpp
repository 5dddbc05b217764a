#include "smcvi/stochvol.hpp"

#include <cmath>

#include "smcvi/error.hpp"

namespace smcvi {

StochVolTruth default_stochvol(std::size_t d, BMode mode, RngStream rng) {
    require(d >= 1, "stochastic volatility dimension must be positive");
    StochVolTruth t{Tensor(1, d), Tensor(1, d), Tensor(1, d), Tensor(d, d)};
    for (std::size_t i = 0; i < d; ++i) {
        t.mu[i] = -1.0 + 0.2 * rng.normal();
        t.phi[i] = 0.9;
        t.q[i] = 0.1;
        t.b(i, i) = 1.0;
        if (mode == BMode::Triangular) {
            for (std::size_t j = 0; j < i; ++j) {
                t.b(i, j) = 0.3 * rng.normal();
            }
        }
    }
    return t;
}

void add_stochvol_params(ParameterSet& params, const StochVolTruth& truth, BMode mode,
                         bool trainable, double noise, RngStream rng) {
    const std::size_t d = truth.mu.cols();
    auto jitter = [&](Tensor t) {
        if (noise > 0.0) {
            for (double& v : t.values()) {
                v += noise * rng.normal();
            }
        }
        return t;
    };
    Tensor phi(1, d), log_q(1, d), logdiag(1, d);
    for (std::size_t i = 0; i < d; ++i) {
        require(truth.phi[i] > 0.0 && truth.phi[i] < 1.0, "Phi entries must lie in (0, 1)");
        require(truth.q[i] > 0.0 && truth.b(i, i) > 0.0, "Q and diag(B) must be positive");
        phi[i] = std::log(truth.phi[i] / (1.0 - truth.phi[i]));
        log_q[i] = std::log(truth.q[i]);
        logdiag[i] = std::log(truth.b(i, i));
    }
    params.add("sv.mu", jitter(truth.mu), trainable);
    params.add("sv.phi", jitter(phi), trainable);
    params.add("sv.log_q", jitter(log_q), trainable);
    params.add("sv.b_logdiag", jitter(logdiag), trainable);
    if (mode == BMode::Triangular) {
        Tensor lower(d, d);
        for (std::size_t i = 0; i < d; ++i) {
            for (std::size_t j = 0; j < i; ++j) {
                lower(i, j) = truth.b(i, j);
            }
        }
        params.add("sv.b_lower", jitter(lower), trainable);
    }
}

TapeVar solve_lower_rows(const TapeVar& b, const TapeVar& u) {
    const Tensor& bv = b.value();
    const Tensor& uv = u.value();
    const std::size_t d = bv.rows();
    require(bv.cols() == d && uv.cols() == d, "triangular solve shapes do not match");
    auto forward = [d](const Tensor& bm, const Tensor& rhs) {
        Tensor z(rhs.rows(), d);
        for (std::size_t r = 0; r < rhs.rows(); ++r) {
            for (std::size_t i = 0; i < d; ++i) {
                double s = rhs(r, i);
                for (std::size_t j = 0; j < i; ++j) {
                    s -= bm(i, j) * z(r, j);
                }
                z(r, i) = s / bm(i, i);
            }
        }
        return z;
    };
    Tensor z = forward(bv, uv);
    if (b.is_constant() && u.is_constant()) {
        return constant(std::move(z));
    }
    auto zs = std::make_shared<const Tensor>(z);
    return custom_vjp(std::move(z), {b, u}, [b, zs, d](const Tensor& gz) {
        const Tensor& bm = b.value();
        // H = gZ B^{-1}: each row h solves B^T h = gz by back substitution.
        Tensor h(gz.rows(), d);
        for (std::size_t r = 0; r < gz.rows(); ++r) {
            for (std::size_t i = d; i-- > 0;) {
                double s = gz(r, i);
                for (std::size_t j = i + 1; j < d; ++j) {
                    s -= bm(j, i) * h(r, j);
                }
                h(r, i) = s / bm(i, i);
            }
        }
        Tensor gb(d, d);
        for (std::size_t r = 0; r < gz.rows(); ++r) {
            for (std::size_t i = 0; i < d; ++i) {
                for (std::size_t j = 0; j <= i; ++j) {
                    gb(i, j) -= h(r, i) * (*zs)(r, j);
                }
            }
        }
        return std::vector<Tensor>{std::move(gb), std::move(h)};
    });
}

StochVolModel::StochVolModel(const BoundParams& params, BMode mode)
    : mu_(params["sv.mu"]),
      phi_(sigmoid(params["sv.phi"])),
      q_log_std_(0.5 * params["sv.log_q"]),
      b_logdiag_(params["sv.b_logdiag"]) {
    const std::size_t d = mu_.cols();
    const TapeVar diag = broadcast_to(exp(b_logdiag_), d, d) * constant(Tensor::identity(d));
    if (mode == BMode::Triangular) {
        Tensor mask(d, d);
        for (std::size_t i = 0; i < d; ++i) {
            for (std::size_t j = 0; j < i; ++j) {
                mask(i, j) = 1.0;
            }
        }
        b_ = diag + params["sv.b_lower"] * constant(std::move(mask));
    } else {
        b_ = diag;
    }
}

DiagGaussian StochVolModel::prior(const TapeVar* prev) const {
    if (prev == nullptr) {
        return DiagGaussian{mu_, q_log_std_};
    }
    const std::size_t n = prev->rows();
    const TapeVar mu = repeat_row(mu_, n);
    return DiagGaussian{mu + repeat_row(phi_, n) * (*prev - mu), repeat_row(q_log_std_, n)};
}

std::unique_ptr<ConditionalBatch> StochVolModel::initial() const {
    return std::make_unique<GaussianBatch>(prior(nullptr));
}

std::unique_ptr<ConditionalBatch> StochVolModel::transition(const TapeVar& prev) const {
    return std::make_unique<GaussianBatch>(prior(&prev));
}

TapeVar StochVolModel::log_observation(const TapeVar& x, const Tensor& y) const {
    const std::size_t n = x.rows();
    const std::size_t d = mu_.cols();
    require(y.cols() == d && x.cols() == d, "observation dimension does not match the model");
    // y = D B e with D = diag(exp(x / 2)): e = B^{-1} D^{-1} y.
    const TapeVar u = repeat_row(constant(y), n) * exp(-0.5 * x);
    const TapeVar z = solve_lower_rows(b_, u);
    return -0.5 * sum(z * z, 1) - 0.5 * sum(x, 1) - sum(b_logdiag_) -
           static_cast<double>(d) * kHalfLog2Pi;
}

Tensor StochVolModel::sample_observation(const Tensor& x, Randomness& rng,
                                         std::uint64_t step) const {
    const std::size_t d = mu_.cols();
    Tensor e(1, d);
    rng.normals(DrawKey{step, 0, Purpose::Observation}, e.values());
    const Tensor be = matmul(e, b_.value().transposed());
    Tensor y(1, d);
    for (std::size_t i = 0; i < d; ++i) {
        y[i] = std::exp(0.5 * x[i]) * be[i];
    }
    return y;
}

StochVolProposal::StochVolProposal(const BoundParams& params, BMode mode)
    : model_(params, mode), mu_(params["q.mu"]), log_var_(params["q.log_var"]) {}

std::unique_ptr<ConditionalBatch> StochVolProposal::conditionals(std::size_t t,
                                                                 const TapeVar* prev,
                                                                 const Tensor&) const {
    require(t < mu_.rows(), "proposal has no parameters for step " + std::to_string(t));
    const DiagGaussian f = model_.prior(prev);
    const std::size_t m = f.size();
    const DiagGaussian site{repeat_row(slice_rows(mu_, t, 1), m),
                            repeat_row(0.5 * slice_rows(log_var_, t, 1), m)};
    return std::make_unique<GaussianBatch>(gauss_product_fuse(f, site).first);
}

std::unique_ptr<ConditionalBatch> StochVolProposal::independent(std::size_t t,
                                                                const Tensor&) const {
    require(t < mu_.rows(), "proposal has no parameters for step " + std::to_string(t));
    return std::make_unique<GaussianBatch>(
        DiagGaussian{slice_rows(mu_, t, 1), 0.5 * slice_rows(log_var_, t, 1)});
}

void add_stochvol_proposal_params(ParameterSet& params, std::size_t steps, std::size_t d) {
    params.add("q.mu", Tensor(steps, d, 0.0));
    params.add("q.log_var", Tensor(steps, d, 0.0));
}

}  // namespace smcvi
