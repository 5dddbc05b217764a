#include "smcvi/ssm.hpp"

#include <cmath>
#include <numeric>

#include "smcvi/error.hpp"

namespace smcvi {

std::vector<std::size_t> iota_indices(std::size_t n) {
    std::vector<std::size_t> out(n);
    std::iota(out.begin(), out.end(), std::size_t{0});
    return out;
}

TapeVar repeat_row(const TapeVar& row, std::size_t n) {
    require(row.rows() == 1, "repeat_row takes a single row");
    return n == 1 ? row : broadcast_to(row, n, row.cols());
}

GaussianBatch::GaussianBatch(DiagGaussian g) : g_(std::move(g)) {
    require(g_.mean.rows() == g_.log_std.rows() && g_.mean.cols() == g_.log_std.cols(),
            "Gaussian mean and log_std shapes differ");
}

TapeVar GaussianBatch::sample(std::span<const std::size_t> components, Randomness& rng,
                              std::uint64_t step, Purpose purpose,
                              std::uint64_t first_particle) const {
    const std::size_t n = components.size();
    Tensor eps(n, dim());
    for (std::size_t i = 0; i < n; ++i) {
        require(components[i] < size(), "component index out of range");
        rng.normals(DrawKey{step, first_particle + i, purpose}, eps.row_span(i));
    }
    const TapeVar mean = gather_rows(g_.mean, components);
    const TapeVar log_std = gather_rows(g_.log_std, components);
    return mean + exp(log_std) * constant(std::move(eps));
}

TapeVar GaussianBatch::log_density(const TapeVar& x) const { return gauss_logpdf_rows(x, g_); }

TapeVar GaussianBatch::log_density_matrix(const TapeVar& x) const {
    return gauss_logpdf_pairwise(x, g_);
}

CategoricalBatch::CategoricalBatch(TapeVar log_probs) : log_probs_(std::move(log_probs)) {}

TapeVar CategoricalBatch::sample(std::span<const std::size_t> components, Randomness& rng,
                                 std::uint64_t step, Purpose purpose,
                                 std::uint64_t first_particle) const {
    const Tensor& lp = log_probs_.value();
    Tensor out(components.size(), 1);
    std::vector<double> probs(lp.cols());
    for (std::size_t i = 0; i < components.size(); ++i) {
        require(components[i] < size(), "component index out of range");
        for (std::size_t k = 0; k < lp.cols(); ++k) {
            probs[k] = std::exp(lp(components[i], k));
        }
        out(i, 0) = static_cast<double>(
            rng.categorical(probs, DrawKey{step, first_particle + i, purpose}));
    }
    return constant(std::move(out));
}

namespace {

std::size_t state_index(double v, std::size_t k) {
    require(v >= 0.0 && v < static_cast<double>(k) && v == std::floor(v),
            "discrete state out of range");
    return static_cast<std::size_t>(v);
}

}  // namespace

TapeVar CategoricalBatch::log_density(const TapeVar& x) const {
    const Tensor& lp = log_probs_.value();
    const Tensor& xv = x.value();
    require(xv.cols() == 1, "discrete states are single columns");
    require(size() == 1 || size() == xv.rows(), "component count must match rows");
    Tensor out(xv.rows(), 1);
    for (std::size_t i = 0; i < xv.rows(); ++i) {
        out(i, 0) = lp(size() == 1 ? 0 : i, state_index(xv(i, 0), lp.cols()));
    }
    return constant(std::move(out));
}

TapeVar CategoricalBatch::log_density_matrix(const TapeVar& x) const {
    const Tensor& lp = log_probs_.value();
    const Tensor& xv = x.value();
    require(xv.cols() == 1, "discrete states are single columns");
    Tensor out(xv.rows(), size());
    for (std::size_t i = 0; i < xv.rows(); ++i) {
        const std::size_t s = state_index(xv(i, 0), lp.cols());
        for (std::size_t j = 0; j < size(); ++j) {
            out(i, j) = lp(j, s);
        }
    }
    return constant(std::move(out));
}

Simulation simulate(const StateSpaceModel& model, std::size_t steps, Randomness& rng) {
    require(steps >= 1, "simulation needs at least one step");
    Simulation sim;
    const std::vector<std::size_t> first{0};
    TapeVar x = model.initial()->sample(first, rng, 0, Purpose::Latent);
    for (std::size_t t = 0; t < steps; ++t) {
        if (t > 0) {
            x = model.transition(x)->sample(first, rng, t, Purpose::Latent);
        }
        sim.x.push_back(x.value());
        sim.data.y.push_back(model.sample_observation(x.value(), rng, t));
    }
    return sim;
}

}  // namespace smcvi
