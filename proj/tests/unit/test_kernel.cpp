#include <cmath>
#include <random>

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include "basis_fixture.hpp"
#include "easbo/errors.hpp"
#include "easbo/kernel.hpp"

using namespace easbo;
using easbo::test::small_basis;

TEST(Kernel, NodeAverageVarianceIsAmplitudeSquared) {
    const auto& b = *small_basis();
    for (double ell : {1.0, 5.0, 20.0}) {
        const KernelParams p{1.7, ell, 2.5};
        const SpectralKernel k(b, p);
        EXPECT_NEAR(k.diagonal_all().mean() / (1.7 * 1.7), 1.0, 1e-10);
        EXPECT_DOUBLE_EQ(k.alpha(), 3.5);
    }
}

TEST(Kernel, ConstantModeOnly) {
    const auto b = small_basis()->truncated(1);
    const auto nodes = all_nodes(b.num_nodes());
    const Eigen::MatrixXd K = kernel_matrix(b, nodes, nodes, {0.8, 3.0, 2.5});
    EXPECT_LE((K.array() - 0.64).abs().maxCoeff(), 1e-12);
}

TEST(Kernel, FullMeshPsdOnRandomDraws) {
    const auto& b = *small_basis();
    const auto nodes = all_nodes(b.num_nodes());
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> u(0, 1);
    for (int draw = 0; draw < 20; ++draw) {
        const KernelParams p{std::exp(u(rng) * 4 - 2), std::exp(u(rng) * 4), 0.5 + 3 * u(rng)};
        const Eigen::MatrixXd K = kernel_matrix(b, nodes, nodes, p);
        const double min_eig = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(K, Eigen::EigenvaluesOnly).eigenvalues()[0];
        EXPECT_GE(min_eig, -1e-8 * K.trace() / static_cast<double>(K.rows()));
    }
}

TEST(Kernel, TransposeIsExact) {
    const auto& b = *small_basis();
    std::mt19937_64 rng(1);
    std::uniform_int_distribution<std::uint32_t> pick(0, static_cast<std::uint32_t>(b.num_nodes() - 1));
    std::vector<NodeId> rows(17), cols(9);
    for (auto& r : rows) r = NodeId(pick(rng));
    for (auto& c : cols) c = NodeId(pick(rng));
    const KernelParams p{1.3, 4.0, 1.5};
    const Eigen::MatrixXd a = kernel_matrix(b, rows, cols, p);
    const Eigen::MatrixXd bt = kernel_matrix(b, cols, rows, p).transpose();
    EXPECT_TRUE((a.array() == bt.array()).all());
}

TEST(Kernel, MatchesExplicitEigenSum) {
    const auto& b = *small_basis();
    const KernelParams p{0.9, 6.0, 2.5};
    const double alpha = p.smoothness + 1.0;
    const auto n = static_cast<double>(b.num_nodes());
    double c = 0;
    for (Eigen::Index x = 0; x < b.eigenvectors.rows(); ++x)
        for (Eigen::Index i = 0; i < b.eigenvalues.size(); ++i)
            c += std::pow(1 / (p.length_scale * p.length_scale) + b.eigenvalues[i], -alpha) * std::pow(b.eigenvectors(x, i), 2);
    c /= n;
    const std::vector<NodeId> nodes{NodeId(3u), NodeId(100u), NodeId(250u)};
    const Eigen::MatrixXd K = kernel_matrix(b, nodes, nodes, p);
    for (int r = 0; r < 3; ++r)
        for (int s = 0; s < 3; ++s) {
            double sum = 0;
            for (Eigen::Index i = 0; i < b.eigenvalues.size(); ++i)
                sum += std::pow(1 / (p.length_scale * p.length_scale) + b.eigenvalues[i], -alpha) *
                       b.eigenvectors(nodes[r].index, i) * b.eigenvectors(nodes[s].index, i);
            EXPECT_NEAR(K(r, s), p.amplitude * p.amplitude / c * sum, 1e-12);
        }
}

TEST(Kernel, LengthScaleDerivativeMatchesFiniteDifference) {
    const auto& b = *small_basis();
    const KernelParams p{1.1, 5.0, 2.5};
    const SpectralKernel k(b, p);
    const Eigen::VectorXd analytic = k.weights_dlog_length();
    const double h = 1e-6;
    KernelParams lo = p, hi = p;
    lo.length_scale *= std::exp(-h);
    hi.length_scale *= std::exp(h);
    const Eigen::VectorXd fd = (SpectralKernel(b, hi).weights() - SpectralKernel(b, lo).weights()) / (2 * h);
    EXPECT_LE((analytic - fd).cwiseAbs().maxCoeff(), 1e-6 * analytic.cwiseAbs().maxCoeff());
}

TEST(Kernel, Errors) {
    const auto& b = *small_basis();
    EXPECT_THROW(SpectralKernel(b, {0.0, 1.0, 2.5}), PreconditionError);
    EXPECT_THROW(SpectralKernel(b, {1.0, -1.0, 2.5}), PreconditionError);
    EXPECT_THROW(SpectralKernel(EigenBasis{}, {1.0, 1.0, 2.5}), PreconditionError);
    const std::vector<NodeId> bad{NodeId(b.num_nodes())};
    EXPECT_THROW(kernel_matrix(b, bad, bad, {}), PreconditionError);
}
