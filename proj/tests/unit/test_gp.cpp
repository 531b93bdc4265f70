#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include "basis_fixture.hpp"
#include "easbo/errors.hpp"
#include "easbo/gp.hpp"

using namespace easbo;
using easbo::test::small_basis;
using easbo::test::small_mesh;

namespace {

std::vector<NodeId> random_nodes(std::size_t count, std::uint64_t seed) {
    std::vector<std::uint32_t> all(small_basis()->num_nodes());
    for (std::uint32_t i = 0; i < all.size(); ++i) all[i] = i;
    std::mt19937_64 rng(seed);
    std::shuffle(all.begin(), all.end(), rng);
    std::vector<NodeId> out;
    for (std::size_t i = 0; i < count; ++i) out.emplace_back(all[i]);
    return out;
}

Eigen::VectorXd random_vector(Eigen::Index n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g;
    Eigen::VectorXd v(n);
    for (auto& x : v) x = g(rng);
    return v;
}

double dense_nlml(const Eigen::MatrixXd& K, double noise, const Eigen::VectorXd& y) {
    const Eigen::MatrixXd C = K + noise * Eigen::MatrixXd::Identity(K.rows(), K.cols());
    const Eigen::PartialPivLU<Eigen::MatrixXd> lu(C);
    const double logdet = std::log(std::abs(lu.determinant()));
    return 0.5 * logdet + 0.5 * y.dot(lu.solve(y)) + 0.5 * static_cast<double>(y.size()) * std::log(2 * std::numbers::pi);
}

}  // namespace

TEST(Nlml, SinglePointClosedForm) {
    const auto& b = *small_basis();
    const GpHyperparameters h{{1.4, 5.0, 2.5}, 1e-3};
    const std::vector<NodeId> x{NodeId(11u)};
    const double kxx = kernel_matrix(b, x, x, h.kernel)(0, 0);
    EXPECT_NEAR(nlml(b, x, Eigen::VectorXd::Zero(1), h), 0.5 * std::log(kxx + 1e-3) + 0.5 * std::log(2 * std::numbers::pi),
                1e-12);
}

TEST(Nlml, DataFitScalesQuadratically) {
    const auto& b = *small_basis();
    const auto x = random_nodes(12, 3);
    const Eigen::VectorXd y = random_vector(12, 4);
    const GpHyperparameters h{{1.0, 6.0, 2.5}, 1e-4};
    const double base = nlml(b, x, Eigen::VectorXd::Zero(12), h);
    const double fit = nlml(b, x, y, h) - base;
    EXPECT_NEAR(nlml(b, x, 3.0 * y, h) - base, 9.0 * fit, 1e-9 * std::abs(fit) * 9);
}

TEST(Nlml, MatchesDenseOracle) {
    const auto& b = *small_basis();
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> u(0, 1);
    for (int trial = 0; trial < 10; ++trial) {
        const std::size_t n = 5 + 5 * static_cast<std::size_t>(trial % 10);
        const auto x = random_nodes(n, 100 + trial);
        const Eigen::VectorXd y = random_vector(static_cast<Eigen::Index>(n), 200 + trial);
        const GpHyperparameters h{{0.5 + u(rng), 2 + 10 * u(rng), 2.5}, 1e-3 + 1e-2 * u(rng)};
        const Eigen::MatrixXd K = kernel_matrix(b, x, x, h.kernel);
        const double oracle = dense_nlml(K, h.noise_variance, y);
        EXPECT_NEAR(nlml(b, x, y, h) / oracle, 1.0, 1e-8);
        EXPECT_NEAR(nlml_with_gradient(b, x, y, h).value / oracle, 1.0, 1e-8);
    }
}

TEST(Nlml, GradientMatchesFiniteDifferences) {
    const auto& b = *small_basis();
    const auto x = random_nodes(25, 5);
    const Eigen::VectorXd y = random_vector(25, 6);
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(0, 1);
    for (int trial = 0; trial < 20; ++trial) {
        const Eigen::Vector3d p(std::log(0.3 + 2 * u(rng)), std::log(2 + 15 * u(rng)), std::log(1e-3 + 0.3 * u(rng)));
        auto eval = [&](const Eigen::Vector3d& q) {
            return nlml(b, x, y, {{std::exp(q[0]), std::exp(q[1]), 2.5}, std::exp(q[2])});
        };
        const auto g = nlml_with_gradient(b, x, y, {{std::exp(p[0]), std::exp(p[1]), 2.5}, std::exp(p[2])}).gradient;
        const double h = 1e-5;
        for (int i = 0; i < 3; ++i) {
            Eigen::Vector3d a = p, c = p;
            a[i] += h;
            c[i] -= h;
            const double fd = (eval(a) - eval(c)) / (2 * h);
            EXPECT_LE(std::abs(g[i] - fd), 1e-5 * std::max(1.0, std::abs(fd))) << trial << " " << i;
        }
    }
}

TEST(Posterior, MatchesDenseOracle) {
    const auto basis = small_basis();
    const auto x = random_nodes(30, 8);
    const Eigen::VectorXd y = random_vector(30, 9);
    const GpHyperparameters h{{1.2, 7.0, 2.5}, 1e-3};
    const auto model = GpModel::condition(basis, x, y, h);
    const auto q = random_nodes(40, 10);
    const auto post = model.posterior(q);

    const Eigen::MatrixXd K = kernel_matrix(*basis, x, x, h.kernel) + 1e-3 * Eigen::MatrixXd::Identity(30, 30);
    const Eigen::MatrixXd Kq = kernel_matrix(*basis, q, x, h.kernel);
    const Eigen::MatrixXd Kqq = kernel_matrix(*basis, q, q, h.kernel);
    const Eigen::PartialPivLU<Eigen::MatrixXd> lu(K);
    const Eigen::VectorXd mean = Kq * lu.solve(y);
    const Eigen::VectorXd var = (Kqq - Kq * lu.solve(Kq.transpose())).diagonal();
    for (Eigen::Index i = 0; i < mean.size(); ++i) {
        EXPECT_NEAR(post.means[i], mean[i], 1e-8 * std::max(1.0, std::abs(mean[i])));
        EXPECT_NEAR(post.variances[i], std::max(var[i], 0.0), 1e-8 * Kqq(i, i));
    }
}

TEST(Posterior, InterpolatesAtJitterFloor) {
    const auto basis = small_basis();
    const auto x = random_nodes(15, 12);
    const Eigen::VectorXd y = random_vector(15, 13);
    const auto model = GpModel::condition(basis, x, y, {{1.0, 4.0, 2.5}, 0.0});
    const auto post = model.posterior(x);
    for (Eigen::Index i = 0; i < y.size(); ++i) EXPECT_NEAR(post.means[i], y[i], 1e-6 * std::max(1.0, std::abs(y[i])));
    EXPECT_LE(post.max_clamp, 1e-8);
}

TEST(Posterior, RevertsToPriorFarFromData) {
    // Full basis: a truncated one cannot represent short length scales.
    const auto& mesh = small_mesh();
    const auto basis = std::make_shared<const EigenBasis>(laplace_beltrami_basis(mesh, mesh.num_vertices()));
    const NodeId near_tip = nearest_node(mesh, Vec3(24, 0, 0));
    const NodeId far_tip = nearest_node(mesh, Vec3(-24, 0, 0));
    const std::vector<NodeId> x{near_tip};
    const GpHyperparameters h{{1.0, 3.0, 2.5}, 1e-6};
    const auto model = GpModel::condition(basis, x, Eigen::VectorXd::Constant(1, 2.0), h);
    const std::vector<NodeId> q{far_tip};
    const auto post = model.posterior(q);
    const double prior = kernel_matrix(*basis, q, q, h.kernel)(0, 0);
    EXPECT_LE(std::abs(post.means[0]), 0.01);
    EXPECT_NEAR(post.variances[0] / prior, 1.0, 1e-3);
}

TEST(Posterior, MoreDataNeverIncreasesVariance) {
    const auto basis = small_basis();
    const auto x = random_nodes(20, 14);
    const Eigen::VectorXd y = random_vector(20, 15);
    const GpHyperparameters h{{1.0, 6.0, 2.5}, 1e-4};
    auto prev = GpModel::condition(basis, {x.begin(), x.begin() + 1}, y.head(1), h).posterior_all().variances;
    for (std::size_t n = 2; n <= x.size(); ++n) {
        const auto cur = GpModel::condition(basis, {x.begin(), x.begin() + n}, y.head(n), h).posterior_all().variances;
        EXPECT_LE((cur - prev).maxCoeff(), 1e-10);
        prev = cur;
    }
}

TEST(Posterior, ReorderingInvariance) {
    const auto basis = small_basis();
    auto x = random_nodes(18, 16);
    Eigen::VectorXd y = random_vector(18, 17);
    const GpHyperparameters h{{1.0, 6.0, 2.5}, 1e-4};
    const auto a = GpModel::condition(basis, x, y, h, true).posterior_all();
    std::reverse(x.begin(), x.end());
    y.reverseInPlace();
    const auto b = GpModel::condition(basis, x, y, h, true).posterior_all();
    EXPECT_LE((a.means - b.means).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_LE((a.variances - b.variances).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Posterior, StandardizationRoundTrip) {
    const auto basis = small_basis();
    const auto x = random_nodes(10, 18);
    const Eigen::VectorXd y = (random_vector(10, 19).array() * 50.0 + 300.0).matrix();
    const auto model = GpModel::condition(basis, x, y, {{1.0, 5.0, 2.5}, 0.0}, true);
    EXPECT_TRUE(model.standardized());
    EXPECT_NEAR(model.offset(), y.mean(), 1e-9);
    const auto post = model.posterior(x);
    for (Eigen::Index i = 0; i < y.size(); ++i) EXPECT_NEAR(post.means[i] / y[i], 1.0, 1e-6);
}

TEST(Fit, ImprovesOnSampledStarts) {
    const auto basis = small_basis();
    const auto x = random_nodes(25, 20);
    const Eigen::VectorXd y = random_vector(25, 21);
    GpFitOptions opts;
    opts.seed = 4;
    opts.length_reference = small_mesh().diameter();
    const auto model = fit_hyperparameters(basis, x, y, opts);
    const Eigen::VectorXd ys = (y.array() - model.offset()) / model.scale();
    std::mt19937_64 rng(22);
    std::uniform_real_distribution<double> u(0, 1);
    for (int i = 0; i < 30; ++i) {
        const GpHyperparameters h{{std::exp(std::log(1e-3) + u(rng) * std::log(1e6)),
                                   opts.length_reference * std::exp(std::log(0.01) + u(rng) * std::log(200.0)), 2.5},
                                  std::exp(std::log(1e-10) + u(rng) * std::log(1e10))};
        EXPECT_LE(model.nlml(), nlml(*basis, x, ys, h) + 1e-9);
    }
}

TEST(Fit, RecoversLengthScaleOfPriorSample) {
    const auto basis = small_basis();
    const auto& mesh = small_mesh();
    const double ell = mesh.diameter() / 4;
    const auto nodes = all_nodes(basis->num_nodes());
    const Eigen::MatrixXd K = kernel_matrix(*basis, nodes, nodes, {1.0, ell, 2.5});
    Eigen::LLT<Eigen::MatrixXd> llt;
    factorize_with_jitter(K, 1e-8, llt);
    const Eigen::VectorXd sample = llt.matrixL() * random_vector(K.rows(), 23);

    const auto x = random_nodes(40, 24);
    Eigen::VectorXd y(40);
    const Eigen::VectorXd noise = random_vector(40, 25) * 1e-3;
    for (int i = 0; i < 40; ++i) y[i] = sample[x[i].index] + noise[i];
    GpFitOptions opts;
    opts.standardize = false;
    opts.length_reference = mesh.diameter();
    const auto model = fit_hyperparameters(basis, x, y, opts);
    const double fitted = model.hyperparameters().kernel.length_scale;
    EXPECT_GE(fitted, ell / 2);
    EXPECT_LE(fitted, ell * 2);
}

TEST(Fit, ConstantObservations) {
    const auto basis = small_basis();
    const auto x = random_nodes(8, 26);
    const Eigen::VectorXd y = Eigen::VectorXd::Constant(8, 42.5);
    GpFitOptions opts;
    opts.length_reference = small_mesh().diameter();
    const auto post = fit_hyperparameters(basis, x, y, opts).posterior_all();
    EXPECT_LE((post.means.array() / 42.5 - 1.0).abs().maxCoeff(), 1e-6);
}

TEST(Fit, ScaleEquivariantArgmin) {
    const auto basis = small_basis();
    const auto x = random_nodes(15, 27);
    const Eigen::VectorXd y = random_vector(15, 28).array().square();
    GpFitOptions opts;
    opts.length_reference = small_mesh().diameter();
    Eigen::Index a, b;
    fit_hyperparameters(basis, x, y, opts).posterior_all().means.minCoeff(&a);
    fit_hyperparameters(basis, x, 37.0 * y, opts).posterior_all().means.minCoeff(&b);
    EXPECT_EQ(a, b);
}

TEST(Fit, DeterministicAndPreconditions) {
    const auto basis = small_basis();
    const auto x = random_nodes(12, 29);
    const Eigen::VectorXd y = random_vector(12, 30);
    GpFitOptions opts;
    opts.seed = 99;
    opts.length_reference = small_mesh().diameter();
    const auto m1 = fit_hyperparameters(basis, x, y, opts);
    const auto m2 = fit_hyperparameters(basis, x, y, opts);
    EXPECT_EQ(m1.to_text(), m2.to_text());
    EXPECT_THROW(fit_hyperparameters(basis, {x[0]}, y.head(1), opts), PreconditionError);
    opts.restarts = 0;
    EXPECT_THROW(fit_hyperparameters(basis, x, y, opts), PreconditionError);
}

TEST(GpModelText, RoundTrip) {
    const auto basis = small_basis();
    const auto x = random_nodes(10, 31);
    const Eigen::VectorXd y = random_vector(10, 32);
    const auto model = GpModel::condition(basis, x, y, {{1.3, 4.5, 2.5}, 1e-3}, true);
    const auto back = GpModel::from_text(model.to_text(), basis);
    EXPECT_EQ(back.inputs(), model.inputs());
    EXPECT_EQ(back.observations(), model.observations());
    EXPECT_EQ(back.to_text(), model.to_text());
    const auto q = random_nodes(5, 33);
    EXPECT_LE((back.posterior(q).means - model.posterior(q).means).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_THROW(GpModel::from_text("{not json", basis), ParseError);
}

TEST(Jitter, EscalatesOnSingularKernel) {
    Eigen::MatrixXd K = Eigen::MatrixXd::Ones(4, 4);
    Eigen::LLT<Eigen::MatrixXd> llt;
    const double used = factorize_with_jitter(K, 0.0, llt);
    EXPECT_GE(used, kJitterFloor);
    EXPECT_LE(used, kMaxJitter);
    EXPECT_EQ(llt.info(), Eigen::Success);
    Eigen::MatrixXd bad = -Eigen::MatrixXd::Identity(3, 3);
    EXPECT_THROW(factorize_with_jitter(bad, 0.0, llt), ComputeError);
}

TEST(MixSeed, DistinctStreams) {
    EXPECT_NE(mix_seed(0, 1), mix_seed(0, 2));
    EXPECT_NE(mix_seed(1, 1), mix_seed(0, 1));
    EXPECT_EQ(mix_seed(5, 7), mix_seed(5, 7));
}
