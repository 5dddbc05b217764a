#include "smcvi/lgssm.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <numbers>

#include "smcvi/error.hpp"

namespace smcvi {

namespace {

Eigen::MatrixXd to_eigen(const Tensor& t) {
    Eigen::MatrixXd m(t.rows(), t.cols());
    for (std::size_t i = 0; i < t.rows(); ++i) {
        for (std::size_t j = 0; j < t.cols(); ++j) {
            m(i, j) = t(i, j);
        }
    }
    return m;
}

Tensor half_log(const Tensor& variances) {
    Tensor out(variances.rows(), variances.cols());
    for (std::size_t i = 0; i < out.size(); ++i) {
        require(variances[i] > 0.0, "noise variances must be positive");
        out[i] = 0.5 * std::log(variances[i]);
    }
    return out;
}

}  // namespace

Lgssm lgssm_make(std::size_t dx, std::size_t dy, double alpha, CMode mode, RngStream rng) {
    require(dx >= 1 && dy >= 1, "LGSSM dimensions must be positive");
    Lgssm m;
    m.a = Tensor(dx, dx);
    for (std::size_t i = 0; i < dx; ++i) {
        for (std::size_t j = 0; j < dx; ++j) {
            const double k = std::abs(static_cast<double>(i) - static_cast<double>(j)) + 1.0;
            m.a(i, j) = std::pow(alpha, k);
        }
    }
    m.c = Tensor(dy, dx);
    if (mode == CMode::Sparse) {
        require(dy <= dx, "sparse C needs dy <= dx");
        for (std::size_t i = 0; i < dy; ++i) {
            m.c(i, i) = 1.0;
        }
    } else {
        for (double& v : m.c.values()) {
            v = rng.normal();
        }
    }
    m.q = Tensor(1, dx, 1.0);
    m.r = Tensor(1, dy, 1.0);
    return m;
}

KalmanResult kalman_filter(const Lgssm& m, const Dataset& data) {
    const std::size_t dx = m.state_dim();
    const std::size_t dy = m.obs_dim();
    const Eigen::MatrixXd a = to_eigen(m.a);
    const Eigen::MatrixXd c = to_eigen(m.c);
    const Eigen::MatrixXd q = to_eigen(m.q).row(0).asDiagonal();
    const Eigen::MatrixXd r = to_eigen(m.r).row(0).asDiagonal();
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(dx);
    Eigen::MatrixXd cov = Eigen::MatrixXd::Identity(dx, dx);
    KalmanResult out;
    for (std::size_t t = 0; t < data.steps(); ++t) {
        require(data.y[t].cols() == dy, "observation dimension does not match the model");
        if (t > 0) {
            mean = a * mean;
            cov = a * cov * a.transpose() + q;
        }
        Eigen::VectorXd y(dy);
        for (std::size_t i = 0; i < dy; ++i) {
            y(i) = data.y[t][i];
        }
        const Eigen::VectorXd innov = y - c * mean;
        Eigen::MatrixXd s = c * cov * c.transpose() + r;
        s = 0.5 * (s + s.transpose());
        const Eigen::LLT<Eigen::MatrixXd> llt(s);
        if (llt.info() != Eigen::Success) {
            throw std::runtime_error("innovation covariance is not positive definite at step " +
                                     std::to_string(t));
        }
        const Eigen::MatrixXd l = llt.matrixL();
        const Eigen::VectorXd white = l.triangularView<Eigen::Lower>().solve(innov);
        const double log_det = 2.0 * l.diagonal().array().log().sum();
        out.log_likelihood += -0.5 * white.squaredNorm() - 0.5 * log_det -
                              0.5 * static_cast<double>(dy) * std::log(2.0 * std::numbers::pi);
        const Eigen::MatrixXd gain = llt.solve(c * cov).transpose();
        mean += gain * innov;
        const Eigen::MatrixXd ikc = Eigen::MatrixXd::Identity(dx, dx) - gain * c;
        // Joseph form keeps the covariance symmetric positive definite.
        cov = ikc * cov * ikc.transpose() + gain * r * gain.transpose();
        out.filtered_means.emplace_back(mean.data(), mean.data() + dx);
        std::vector<double> flat(dx * dx);
        for (std::size_t i = 0; i < dx; ++i) {
            for (std::size_t j = 0; j < dx; ++j) {
                flat[i * dx + j] = cov(i, j);
            }
        }
        out.filtered_covs.push_back(std::move(flat));
    }
    return out;
}

double kalman_loglik(const Lgssm& m, const Dataset& data) {
    return kalman_filter(m, data).log_likelihood;
}

LgssmModel::LgssmModel(const Lgssm& m)
    : m_(m),
      a_t_(constant(m.a.transposed())),
      c_t_(constant(m.c.transposed())),
      q_log_std_(constant(half_log(m.q))),
      r_log_std_(constant(half_log(m.r))) {}

std::unique_ptr<ConditionalBatch> LgssmModel::initial() const {
    const std::size_t dx = state_dim();
    return std::make_unique<GaussianBatch>(
        DiagGaussian{constant(Tensor(1, dx)), constant(Tensor(1, dx))});
}

std::unique_ptr<ConditionalBatch> LgssmModel::transition(const TapeVar& prev) const {
    return std::make_unique<GaussianBatch>(
        DiagGaussian{matmul(prev, a_t_), repeat_row(q_log_std_, prev.rows())});
}

TapeVar LgssmModel::log_observation(const TapeVar& x, const Tensor& y) const {
    // N(y; Cx, R) is symmetric in y and Cx, so y serves as the shared mean.
    return gauss_logpdf_rows(matmul(x, c_t_), DiagGaussian{constant(y), r_log_std_});
}

Tensor LgssmModel::sample_observation(const Tensor& x, Randomness& rng,
                                      std::uint64_t step) const {
    Tensor y = matmul(x, m_.c.transposed());
    Tensor eps(1, obs_dim());
    rng.normals(DrawKey{step, 0, Purpose::Observation}, eps.values());
    for (std::size_t i = 0; i < y.size(); ++i) {
        y[i] += std::sqrt(m_.r[i]) * eps[i];
    }
    return y;
}

LgssmProposal::LgssmProposal(const Lgssm& m, const BoundParams& params)
    : a_t_(constant(m.a.transposed())),
      mu_(params["q.mu"]),
      beta_(params["q.beta"]),
      log_sigma_(params["q.log_sigma"]) {
    require(mu_.cols() == m.state_dim(), "proposal parameters do not match the state dimension");
}

std::unique_ptr<ConditionalBatch> LgssmProposal::conditionals(std::size_t t, const TapeVar* prev,
                                                              const Tensor&) const {
    require(t < mu_.rows(), "proposal has no parameters for step " + std::to_string(t));
    const TapeVar mu = slice_rows(mu_, t, 1);
    const TapeVar ls = slice_rows(log_sigma_, t, 1);
    if (prev == nullptr) {
        return std::make_unique<GaussianBatch>(DiagGaussian{mu, ls});
    }
    const std::size_t m = prev->rows();
    const TapeVar mean =
        repeat_row(mu, m) + repeat_row(slice_rows(beta_, t, 1), m) * matmul(*prev, a_t_);
    return std::make_unique<GaussianBatch>(DiagGaussian{mean, repeat_row(ls, m)});
}

std::unique_ptr<ConditionalBatch> LgssmProposal::independent(std::size_t t, const Tensor&) const {
    require(t < mu_.rows(), "proposal has no parameters for step " + std::to_string(t));
    return std::make_unique<GaussianBatch>(
        DiagGaussian{slice_rows(mu_, t, 1), slice_rows(log_sigma_, t, 1)});
}

void add_lgssm_proposal_params(ParameterSet& params, std::size_t steps, std::size_t dx,
                               bool train_beta) {
    params.add("q.mu", Tensor(steps, dx, 0.0));
    params.add("q.beta", Tensor(steps, dx, 1.0), train_beta);
    params.add("q.log_sigma", Tensor(steps, dx, 0.0));
}

}  // namespace smcvi
