#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "smcvi/distributions.hpp"
#include "smcvi/error.hpp"

using namespace smcvi;

namespace {

DiagGaussian gauss(std::initializer_list<std::initializer_list<double>> mean,
                   std::initializer_list<std::initializer_list<double>> log_std) {
    return DiagGaussian{constant(Tensor::matrix(mean)), constant(Tensor::matrix(log_std))};
}

// Plain-double mixture used as an independent oracle for the implicit gradient.
struct PlainMixture {
    std::vector<double> log_w;            // M
    std::vector<std::vector<double>> mu;  // M x D
    std::vector<std::vector<double>> ls;  // M x D

    double phi(double z) const { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

    std::vector<double> responsibilities(const std::vector<double>& x, std::size_t e) const {
        std::vector<double> a(log_w);
        for (std::size_t j = 0; j < a.size(); ++j) {
            for (std::size_t k = 0; k < e; ++k) {
                const double s = std::exp(ls[j][k]);
                const double z = (x[k] - mu[j][k]) / s;
                a[j] += -0.5 * z * z - ls[j][k];
            }
        }
        const double top = *std::max_element(a.begin(), a.end());
        double norm = 0.0;
        for (double& v : a) {
            v = std::exp(v - top);
            norm += v;
        }
        for (double& v : a) {
            v /= norm;
        }
        return a;
    }

    double conditional_cdf(const std::vector<double>& x, std::size_t e) const {
        const auto w = responsibilities(x, e);
        double f = 0.0;
        for (std::size_t j = 0; j < w.size(); ++j) {
            f += w[j] * phi((x[e] - mu[j][e]) / std::exp(ls[j][e]));
        }
        return f;
    }

    // Inverse distributional transform by bisection, coordinate by coordinate.
    std::vector<double> invert(const std::vector<double>& u) const {
        std::vector<double> x(u.size(), 0.0);
        for (std::size_t e = 0; e < u.size(); ++e) {
            double lo = -60.0;
            double hi = 60.0;
            for (int it = 0; it < 200; ++it) {
                x[e] = 0.5 * (lo + hi);
                if (conditional_cdf(x, e) < u[e]) {
                    lo = x[e];
                } else {
                    hi = x[e];
                }
            }
            x[e] = 0.5 * (lo + hi);
        }
        return x;
    }
};

GaussianMixture to_mixture(const PlainMixture& p, Tape& tape, TapeVar& lw, TapeVar& mu,
                           TapeVar& ls) {
    const std::size_t m = p.mu.size();
    const std::size_t d = p.mu[0].size();
    Tensor w(1, m), mm(m, d), ll(m, d);
    for (std::size_t j = 0; j < m; ++j) {
        w[j] = p.log_w[j];
        for (std::size_t e = 0; e < d; ++e) {
            mm(j, e) = p.mu[j][e];
            ll(j, e) = p.ls[j][e];
        }
    }
    lw = tape.variable(w);
    mu = tape.variable(mm);
    ls = tape.variable(ll);
    return GaussianMixture{lw, DiagGaussian{mu, ls}};
}

double mixture_cdf_1d(double x, const std::vector<double>& w, const std::vector<double>& mu,
                      const std::vector<double>& sd) {
    double f = 0.0;
    for (std::size_t j = 0; j < w.size(); ++j) {
        f += w[j] * normal_cdf((x - mu[j]) / sd[j]);
    }
    return f;
}

}  // namespace

TEST_CASE("Philox4x32-10 known-answer vectors") {
    CHECK(philox4x32({0, 0, 0, 0}, {0, 0}) ==
          std::array<std::uint32_t, 4>{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u});
    CHECK(philox4x32({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu},
                     {0xffffffffu, 0xffffffffu}) ==
          std::array<std::uint32_t, 4>{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu});
    CHECK(philox4x32({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u},
                     {0xa4093822u, 0x299f31d0u}) ==
          std::array<std::uint32_t, 4>{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u});
}

TEST_CASE("RngStream reproducibility and stream separation") {
    RngStream a(42, 7);
    RngStream b(42, 7);
    RngStream c(42, 8);
    int differ = 0;
    for (int i = 0; i < 100; ++i) {
        const auto va = a.next_u64();
        CHECK(va == b.next_u64());
        differ += va != c.next_u64();
    }
    CHECK(differ == 100);

    StreamRandomness r1(5, 0);
    StreamRandomness r2(5, 0);
    std::vector<double> x(3), y(3), z(3);
    r1.normals(DrawKey{1, 2, Purpose::Proposal}, x);
    r2.normals(DrawKey{0, 0, Purpose::Proposal}, z);
    r2.normals(DrawKey{1, 2, Purpose::Proposal}, y);
    CHECK(x == y);
    CHECK(x != z);
}

TEST_CASE("uniform and normal moments") {
    RngStream s(123);
    double mean = 0.0;
    double sq = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double v = s.normal();
        mean += v;
        sq += v * v;
    }
    mean /= n;
    sq /= n;
    CHECK(std::abs(mean) < 5.0 / std::sqrt(n));
    CHECK(std::abs(sq - 1.0) < 5.0 * std::sqrt(2.0 / n));
}

TEST_CASE("diag_gauss_logpdf examples") {
    const auto std1 = gauss({{0.0}}, {{0.0}});
    CHECK(diag_gauss_logpdf(constant(Tensor::row({0.0})), std1).item() ==
          doctest::Approx(-0.918938533204673).epsilon(1e-14));
    const auto g = gauss({{1.3}}, {{std::log(2.5)}});
    CHECK(diag_gauss_logpdf(constant(Tensor::row({1.3})), g).item() ==
          doctest::Approx(-kHalfLog2Pi - std::log(2.5)).epsilon(1e-14));
    const auto std2 = gauss({{0.0, 0.0}}, {{0.0, 0.0}});
    CHECK(diag_gauss_logpdf(constant(Tensor::row({0.0, 0.0})), std2).item() ==
          doctest::Approx(2 * -0.918938533204673).epsilon(1e-14));
    CHECK_THROWS_AS(diag_gauss_logpdf(constant(Tensor::row({0.0})), std2), ContractViolation);
}

TEST_CASE("Gaussian log-density gradients pass finite differences") {
    std::mt19937_64 gen(3);
    std::normal_distribution<double> n01;
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<Tensor> point{Tensor(4, 3), Tensor(4, 3), Tensor(4, 3)};
        for (auto& p : point) {
            for (double& v : p.values()) {
                v = 0.5 * n01(gen);
            }
        }
        auto rows = [](std::span<const TapeVar> v) {
            return sum(gauss_logpdf_rows(v[0], DiagGaussian{v[1], v[2]}));
        };
        CHECK(finite_diff_check(rows, point) < 1e-6);
        auto pair = [](std::span<const TapeVar> v) {
            return logsumexp(gauss_logpdf_pairwise(v[0], DiagGaussian{v[1], v[2]}));
        };
        CHECK(finite_diff_check(pair, point) < 1e-6);
        auto fuse = [](std::span<const TapeVar> v) {
            const DiagGaussian a{v[0], v[1]};
            const DiagGaussian b{v[2], v[1] * 0.5};
            auto [f, ln] = gauss_product_fuse(a, b);
            return sum(ln) + sum(f.mean * f.log_std);
        };
        CHECK(finite_diff_check(fuse, point) < 1e-6);
    }
    std::vector<Tensor> ten{Tensor(1, 10)};
    for (double& v : ten[0].values()) {
        v = n01(gen);
    }
    CHECK(finite_diff_check([](std::span<const TapeVar> v) { return logsumexp(v[0]); }, ten) <
          1e-6);
}

TEST_CASE("pairwise and row-wise densities agree bit for bit") {
    const Tensor x = Tensor::matrix({{0.3, -1.2}, {2.0, 0.7}});
    const auto g = gauss({{0.1, 0.2}, {-0.5, 1.0}}, {{0.3, -0.2}, {0.0, 0.4}});
    const Tensor rows = gauss_logpdf_rows(constant(x), g).value();
    const Tensor pair = gauss_logpdf_pairwise(constant(x), g).value();
    CHECK(rows(0, 0) == pair(0, 0));
    CHECK(rows(1, 0) == pair(1, 1));
}

TEST_CASE("diag_gauss_rsample") {
    StreamRandomness rng(9, 0);
    const DrawKey key{0, 0, Purpose::Proposal};
    const auto tight = gauss({{1.5, -2.0}}, {{-30.0, -30.0}});
    const Tensor x = diag_gauss_rsample(tight, rng, key).value();
    CHECK(x[0] == doctest::Approx(1.5).epsilon(1e-12));
    CHECK(x[1] == doctest::Approx(-2.0).epsilon(1e-12));

    Tape tape;
    TapeVar mu = tape.variable(Tensor::row({0.4, -0.1}));
    TapeVar ls = tape.variable(Tensor::row({0.2, -0.3}));
    TapeVar s = diag_gauss_rsample(DiagGaussian{mu, ls}, rng, key);
    std::vector<TapeVar> wrt{mu, ls};
    for (std::size_t e = 0; e < 2; ++e) {
        const auto g = tape.grad(slice_cols(s, e, 1), wrt);
        CHECK(g[0][e] == 1.0);
        CHECK(g[0][1 - e] == 0.0);
        CHECK(g[1][e] == doctest::Approx(s.value()[e] - mu.value()[e]).epsilon(1e-14));
    }
}

TEST_CASE("gauss_product_fuse examples and identity") {
    {
        auto [f, ln] = gauss_product_fuse(gauss({{0.0}}, {{0.0}}), gauss({{0.0}}, {{0.0}}));
        CHECK(f.mean.item() == 0.0);
        CHECK(std::exp(2 * f.log_std.item()) == doctest::Approx(0.5).epsilon(1e-14));
    }
    {
        auto [f, ln] = gauss_product_fuse(gauss({{0.0}}, {{0.0}}), gauss({{2.0}}, {{0.0}}));
        CHECK(f.mean.item() == doctest::Approx(1.0).epsilon(1e-14));
        CHECK(std::exp(2 * f.log_std.item()) == doctest::Approx(0.5).epsilon(1e-14));
        const double expected = -0.5 * std::log(2 * std::numbers::pi * 2.0) - 4.0 / 4.0;
        CHECK(ln.item() == doctest::Approx(expected).epsilon(1e-14));
        CHECK(ln.item() == doctest::Approx(-2.2655).epsilon(1e-4));
    }
    {
        const auto g = gauss({{0.7, -0.3}}, {{0.1, -0.4}});
        const double flat = 0.5 * std::log(1e12);
        auto [f, ln] = gauss_product_fuse(g, gauss({{0.0, 0.0}}, {{flat, flat}}));
        CHECK(f.mean.value()[0] == doctest::Approx(0.7).epsilon(1e-9));
        CHECK(f.log_std.value()[1] == doctest::Approx(-0.4).epsilon(1e-9));
    }
    std::mt19937_64 gen(17);
    std::normal_distribution<double> n01;
    for (int trial = 0; trial < 50; ++trial) {
        Tensor ma(1, 3), la(1, 3), mb(1, 3), lb(1, 3), x(1, 3);
        for (Tensor* t : {&ma, &la, &mb, &lb, &x}) {
            for (double& v : t->values()) {
                v = n01(gen);
            }
        }
        const DiagGaussian a{constant(ma), constant(la)};
        const DiagGaussian b{constant(mb), constant(lb)};
        auto [f, ln] = gauss_product_fuse(a, b);
        const double lhs =
            diag_gauss_logpdf(constant(x), a).item() + diag_gauss_logpdf(constant(x), b).item();
        const double rhs = ln.item() + diag_gauss_logpdf(constant(x), f).item();
        CHECK(std::abs(lhs - rhs) < 1e-10);
    }
}

TEST_CASE("categorical_sample") {
    const std::vector<double> one{1.0};
    CHECK(categorical_sample(one, 0.0) == 0);
    CHECK(categorical_sample(one, 0.999) == 0);
    const std::vector<double> w{0.25, 0.75};
    CHECK(categorical_sample(w, 0.5) == 1);
    CHECK(categorical_sample(w, 0.1) == 0);
    const std::vector<double> half{0.5, 0.5};
    CHECK(categorical_sample(half, 0.5) == 1);
    const std::vector<double> gap{0.0, 1.0, 0.0};
    CHECK(categorical_sample(gap, 0.0) == 1);
    CHECK(categorical_sample(gap, 0.9999999) == 1);
    const std::vector<double> zeros{0.0, 0.0};
    CHECK_THROWS_AS(categorical_sample(zeros, 0.3), DegeneracyError);
}

TEST_CASE("batched categorical draws equal per-key draws") {
    const std::vector<double> w{0.0, 0.3, 0.0, 1e-300, 0.5, 0.2, 0.0};
    StreamRandomness a(5, 1), b(5, 1);
    std::vector<std::size_t> batch(500);
    a.categorical_many(w, DrawKey{3, 0, Purpose::Ancestor, 2}, batch);
    for (std::size_t i = 0; i < batch.size(); ++i) {
        CHECK(batch[i] == b.categorical(w, DrawKey{3, i, Purpose::Ancestor, 2}));
        CHECK(w[batch[i]] > 0.0);
    }
    for (double u : {0.0, 0.2999999, 0.3, 0.8, 1.0 - 1e-16}) {
        CHECK(CategoricalTable(w)(u) == categorical_sample(w, u));
    }
}

TEST_CASE("mixture_logpdf") {
    const auto single = gauss({{0.4, -1.0}}, {{0.2, 0.1}});
    const TapeVar x = constant(Tensor::row({0.1, 0.5}));
    CHECK(mixture_logpdf(x, GaussianMixture{constant(Tensor::row({0.0})), single}).item() ==
          doctest::Approx(diag_gauss_logpdf(x, single).item()).epsilon(1e-14));

    const auto twin = gauss({{0.4, -1.0}, {0.4, -1.0}}, {{0.2, 0.1}, {0.2, 0.1}});
    const TapeVar lw = constant(Tensor::row({std::log(0.3), std::log(0.7)}));
    CHECK(mixture_logpdf(x, GaussianMixture{lw, twin}).item() ==
          doctest::Approx(diag_gauss_logpdf(x, single).item()).epsilon(1e-14));

    const auto two = gauss({{0.0}, {2.0}}, {{0.0}, {0.0}});
    const TapeVar half = constant(Tensor::row({std::log(0.5), std::log(0.5)}));
    CHECK(mixture_logpdf(constant(Tensor::row({1.0})), GaussianMixture{half, two}).item() ==
          doctest::Approx(-1.418939).epsilon(1e-6));
    CHECK_THROWS_AS(mixture_logpdf(x, GaussianMixture{half, two}), ContractViolation);
}

TEST_CASE("mixture density integrates to one on a grid") {
    const auto comps = gauss({{-1.5}, {0.5}, {3.0}}, {{-0.3}, {0.2}, {0.6}});
    const TapeVar lw = constant(Tensor::row({std::log(0.2), std::log(0.5), std::log(0.3)}));
    const GaussianMixture m{lw, comps};
    const double lo = -15.0;
    const double hi = 20.0;
    const int n = 7000;
    const double h = (hi - lo) / n;
    double integral = 0.0;
    for (int i = 0; i <= n; ++i) {
        const double v = std::exp(mixture_logpdf(constant(Tensor::row({lo + i * h})), m).item());
        integral += (i == 0 || i == n) ? 0.5 * v : v;
    }
    integral *= h;
    CHECK(integral >= 0.999);
    CHECK(integral <= 1.001);
}

TEST_CASE("mixture sampler marginal passes a Kolmogorov-Smirnov test") {
    const std::vector<double> w{0.3, 0.7};
    const std::vector<double> mu{-1.0, 2.0};
    const std::vector<double> sd{0.5, 1.2};
    const GaussianMixture m{constant(Tensor::row({std::log(w[0]), std::log(w[1])})),
                            gauss({{mu[0]}, {mu[1]}}, {{std::log(sd[0])}, {std::log(sd[1])}})};
    StreamRandomness rng(2024, 1);
    const std::size_t n = 100000;
    const Tensor s = mixture_implicit_rsample(m, n, rng, 0).value();
    std::vector<double> v(s.values().begin(), s.values().end());
    std::sort(v.begin(), v.end());
    double d = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double f = mixture_cdf_1d(v[i], w, mu, sd);
        d = std::max({d, std::abs(f - static_cast<double>(i) / n),
                      std::abs(static_cast<double>(i + 1) / n - f)});
    }
    // Asymptotic KS critical value at alpha = 0.001.
    CHECK(d < 1.9495 / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("implicit gradient reduces to standard reparameterization for one component") {
    Tape tape;
    TapeVar lw = tape.variable(Tensor::row({0.0}));
    TapeVar mu = tape.variable(Tensor::row({0.3, -0.8}));
    TapeVar ls = tape.variable(Tensor::row({0.1, -0.5}));
    StreamRandomness rng(1, 2);
    const TapeVar x = mixture_implicit_rsample(GaussianMixture{lw, DiagGaussian{mu, ls}}, 1, rng, 0);
    std::vector<TapeVar> wrt{mu, ls};
    for (std::size_t e = 0; e < 2; ++e) {
        const auto g = tape.grad(slice_cols(x, e, 1), wrt);
        CHECK(g[0][e] == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(g[0][1 - e] == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
        CHECK(g[1][e] == doctest::Approx(x.value()[e] - mu.value()[e]).epsilon(1e-12));
        CHECK(g[1][1 - e] == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
    }
}

TEST_CASE("implicit gradient vanishes for log-weights of identical components") {
    Tape tape;
    TapeVar lw = tape.variable(Tensor::row({std::log(0.3), std::log(0.7)}));
    TapeVar mu = tape.variable(Tensor::matrix({{0.3, -0.8}, {0.3, -0.8}}));
    TapeVar ls = tape.variable(Tensor::matrix({{0.1, -0.5}, {0.1, -0.5}}));
    StreamRandomness rng(4, 2);
    const TapeVar x =
        mixture_implicit_rsample(GaussianMixture{lw, DiagGaussian{mu, ls}}, 5, rng, 0);
    std::vector<TapeVar> wrt{lw};
    const auto g = tape.grad(sum(x * x), wrt);
    CHECK(std::abs(g[0][0]) < 1e-12);
    CHECK(std::abs(g[0][1]) < 1e-12);
}

TEST_CASE("implicit gradient matches finite differences of the inverse-CDF map") {
    std::mt19937_64 gen(99);
    std::normal_distribution<double> n01;
    std::uniform_real_distribution<double> unif(0.05, 0.95);
    for (int trial = 0; trial < 10; ++trial) {
        PlainMixture p;
        p.log_w = {n01(gen), n01(gen)};
        const double top = std::max(p.log_w[0], p.log_w[1]);
        const double lse =
            top + std::log(std::exp(p.log_w[0] - top) + std::exp(p.log_w[1] - top));
        p.log_w[0] -= lse;
        p.log_w[1] -= lse;
        p.mu = {{n01(gen), n01(gen)}, {n01(gen) + 1.0, n01(gen) - 1.0}};
        p.ls = {{0.3 * n01(gen), 0.3 * n01(gen)}, {0.3 * n01(gen), 0.3 * n01(gen)}};
        const std::vector<double> u{unif(gen), unif(gen)};
        const std::vector<double> x = p.invert(u);

        // Conditional CDFs are monotone in the current coordinate.
        for (std::size_t e = 0; e < 2; ++e) {
            auto lower = x;
            auto upper = x;
            lower[e] -= 0.1;
            upper[e] += 0.1;
            CHECK(p.conditional_cdf(lower, e) < p.conditional_cdf(upper, e));
        }

        Tape tape;
        TapeVar lw, mu, ls;
        const GaussianMixture m = to_mixture(p, tape, lw, mu, ls);
        const TapeVar xs = mixture_implicit_attach(Tensor::row({x[0], x[1]}), m);
        std::vector<TapeVar> wrt{lw, mu, ls};

        const double h = 1e-5;
        for (std::size_t e = 0; e < 2; ++e) {
            const auto g = tape.grad(slice_cols(xs, e, 1), wrt);
            auto numeric = [&](auto mutate) {
                PlainMixture plus = p;
                PlainMixture minus = p;
                mutate(plus, h);
                mutate(minus, -h);
                return (plus.invert(u)[e] - minus.invert(u)[e]) / (2 * h);
            };
            // Log-weights perturbed along the normalized direction (shift of one
            // weight followed by renormalization).
            for (std::size_t j = 0; j < 2; ++j) {
                const double fd = numeric([j](PlainMixture& q, double d) {
                    q.log_w[j] += d;
                    const double a = q.log_w[0];
                    const double b = q.log_w[1];
                    const double t = std::max(a, b);
                    const double l = t + std::log(std::exp(a - t) + std::exp(b - t));
                    q.log_w[0] -= l;
                    q.log_w[1] -= l;
                });
                // Autodiff side: project onto the same direction.
                const double pj = std::exp(p.log_w[j]);
                double directional = g[0][j];
                for (std::size_t k = 0; k < 2; ++k) {
                    directional -= pj * g[0][k];
                }
                CHECK(std::abs(directional - fd) / std::max(1.0, std::abs(fd)) < 1e-4);
            }
            for (std::size_t j = 0; j < 2; ++j) {
                for (std::size_t k = 0; k < 2; ++k) {
                    const double fd_mu =
                        numeric([j, k](PlainMixture& q, double d) { q.mu[j][k] += d; });
                    const double fd_ls =
                        numeric([j, k](PlainMixture& q, double d) { q.ls[j][k] += d; });
                    CHECK(std::abs(g[1](j, k) - fd_mu) / std::max(1.0, std::abs(fd_mu)) < 1e-4);
                    CHECK(std::abs(g[2](j, k) - fd_ls) / std::max(1.0, std::abs(fd_ls)) < 1e-4);
                }
            }
        }
    }
}

TEST_CASE("tail samples are counted and their gradient dropped") {
    Tape tape;
    TapeVar lw = tape.variable(Tensor::row({0.0}));
    TapeVar mu = tape.variable(Tensor::row({0.0}));
    TapeVar ls = tape.variable(Tensor::row({0.0}));
    ImplicitGradientStats stats;
    const TapeVar x = mixture_implicit_attach(Tensor::matrix({{0.5}, {60.0}}),
                                              GaussianMixture{lw, DiagGaussian{mu, ls}}, &stats);
    CHECK(stats.tail_failures == 1);
    std::vector<TapeVar> wrt{mu};
    const auto g = tape.grad(sum(x), wrt);
    CHECK(g[0][0] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("bernoulli_logpmf") {
    const double half = std::log(0.5);
    CHECK(bernoulli_logpmf(Tensor::row({1.0}), constant(Tensor::row({0.0}))).item() ==
          doctest::Approx(half).epsilon(1e-15));
    CHECK(bernoulli_logpmf(Tensor::row({0.0}), constant(Tensor::row({0.0}))).item() ==
          doctest::Approx(half).epsilon(1e-15));
    const double big = bernoulli_logpmf(Tensor::row({1.0}), constant(Tensor::row({40.0}))).item();
    CHECK(std::isfinite(big));
    CHECK(std::abs(big) < 1e-15);
    CHECK(bernoulli_logpmf(Tensor::row({0.0}), constant(Tensor::row({800.0}))).item() ==
          doctest::Approx(-800.0));
    CHECK_THROWS_AS(bernoulli_logpmf(Tensor::row({0.5}), constant(Tensor::row({0.0}))),
                    ContractViolation);
    std::vector<Tensor> point{Tensor::matrix({{0.3, -2.0, 1.1}, {0.0, 4.0, -0.6}})};
    CHECK(finite_diff_check(
              [](std::span<const TapeVar> v) {
                  return sum(bernoulli_logpmf(Tensor::row({1.0, 0.0, 1.0}), v[0]));
              },
              point) < 1e-6);
}
