#include "smcvi/dmm.hpp"

#include <cmath>

#include "smcvi/error.hpp"

namespace smcvi {

void add_linear_params(ParameterSet& params, const std::string& prefix, std::size_t in,
                       std::size_t out, RngStream& rng, bool trainable) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    Tensor w(in, out), b(1, out);
    for (double& v : w.values()) {
        v = bound * (2.0 * rng.uniform() - 1.0);
    }
    for (double& v : b.values()) {
        v = bound * (2.0 * rng.uniform() - 1.0);
    }
    params.add(prefix + ".w", std::move(w), trainable);
    params.add(prefix + ".b", std::move(b), trainable);
}

namespace {

TapeVar linear(const BoundParams& params, const std::string& prefix, const TapeVar& x) {
    const TapeVar& w = params[prefix + ".w"];
    return matmul(x, w) + repeat_row(params[prefix + ".b"], x.rows());
}

DiagGaussian split_gaussian(const TapeVar& out, std::size_t dx) {
    // Second half is the log-variance; the standard deviation is its half.
    return DiagGaussian{slice_cols(out, 0, dx), 0.5 * slice_cols(out, dx, dx)};
}

}  // namespace

TapeVar mlp2(const BoundParams& params, const std::string& prefix, const TapeVar& x) {
    return linear(params, prefix + ".2", leaky_relu(linear(params, prefix + ".1", x)));
}

void add_dmm_params(ParameterSet& params, const DmmDims& dims, RngStream rng, bool trainable) {
    add_linear_params(params, "dmm.trans.1", dims.dx, dims.dh, rng, trainable);
    add_linear_params(params, "dmm.trans.2", dims.dh, 2 * dims.dx, rng, trainable);
    add_linear_params(params, "dmm.emit.1", dims.dx, dims.dh, rng, trainable);
    add_linear_params(params, "dmm.emit.2", dims.dh, dims.dy, rng, trainable);
}

void add_dmm_proposal_params(ParameterSet& params, const DmmDims& dims, RngStream rng) {
    add_linear_params(params, "q.x.1", dims.dx, dims.dh, rng);
    add_linear_params(params, "q.x.2", dims.dh, 2 * dims.dx, rng);
    add_linear_params(params, "q.y.1", dims.dy, dims.dh, rng);
    add_linear_params(params, "q.y.2", dims.dh, 2 * dims.dx, rng);
}

DmmModel::DmmModel(const BoundParams& params, const DmmDims& dims)
    : params_(&params), dims_(dims) {}

std::unique_ptr<ConditionalBatch> DmmModel::initial() const {
    return transition(constant(Tensor(1, dims_.dx)));
}

std::unique_ptr<ConditionalBatch> DmmModel::transition(const TapeVar& prev) const {
    return std::make_unique<GaussianBatch>(
        split_gaussian(mlp2(*params_, "dmm.trans", prev), dims_.dx));
}

TapeVar DmmModel::log_observation(const TapeVar& x, const Tensor& y) const {
    return bernoulli_logpmf(y, mlp2(*params_, "dmm.emit", x));
}

Tensor DmmModel::sample_observation(const Tensor& x, Randomness& rng, std::uint64_t step) const {
    const Tensor logits = mlp2(*params_, "dmm.emit", constant(x)).value();
    Tensor y(1, dims_.dy);
    for (std::size_t k = 0; k < dims_.dy; ++k) {
        const double p = 1.0 / (1.0 + std::exp(-logits[k]));
        const std::vector<double> w{1.0 - p, p};
        y[k] = static_cast<double>(rng.categorical(w, DrawKey{step, 0, Purpose::Observation, k}));
    }
    return y;
}

DmmProposal::DmmProposal(const BoundParams& params, const DmmDims& dims)
    : params_(&params), dims_(dims) {}

DiagGaussian DmmProposal::y_factor(const Tensor& y) const {
    require(y.cols() == dims_.dy, "observation dimension does not match the proposal");
    return split_gaussian(mlp2(*params_, "q.y", constant(y)), dims_.dx);
}

std::unique_ptr<ConditionalBatch> DmmProposal::conditionals(std::size_t, const TapeVar* prev,
                                                            const Tensor& y) const {
    const TapeVar x_prev = prev != nullptr ? *prev : constant(Tensor(1, dims_.dx));
    const DiagGaussian fx = split_gaussian(mlp2(*params_, "q.x", x_prev), dims_.dx);
    const DiagGaussian fy = y_factor(y);
    const std::size_t m = x_prev.rows();
    const DiagGaussian fy_rows{repeat_row(fy.mean, m), repeat_row(fy.log_std, m)};
    return std::make_unique<GaussianBatch>(gauss_product_fuse(fx, fy_rows).first);
}

std::unique_ptr<ConditionalBatch> DmmProposal::independent(std::size_t, const Tensor& y) const {
    return std::make_unique<GaussianBatch>(y_factor(y));
}

}  // namespace smcvi
