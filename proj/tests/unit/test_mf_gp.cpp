#include <algorithm>
#include <cmath>
#include <random>

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include "basis_fixture.hpp"
#include "easbo/errors.hpp"
#include "easbo/mf_gp.hpp"

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

MfHyperparameters sample_hyper(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0, 1);
    MfHyperparameters h;
    h.low = {0.5 + u(rng), 3 + 10 * u(rng), 2.5};
    h.discrepancy = {0.1 + 0.5 * u(rng), 3 + 10 * u(rng), 2.5};
    h.rho = -2 + 4 * u(rng);
    h.noise_low = 1e-3 + 1e-2 * u(rng);
    h.noise_high = 1e-3 + 1e-2 * u(rng);
    return h;
}

}  // namespace

TEST(MfCovariance, BlockStructure) {
    const auto& b = *small_basis();
    const auto xl = random_nodes(12, 1);
    const auto xh = random_nodes(5, 2);
    MfHyperparameters h;
    h.low = {1.3, 6.0, 2.5};
    h.discrepancy = {0.4, 3.0, 2.5};
    h.noise_low = h.noise_high = 0.0;
    h.rho = 0.0;
    Eigen::MatrixXd K = mf_covariance(b, xl, xh, h);
    EXPECT_EQ(K.topRightCorner(12, 5).cwiseAbs().maxCoeff(), 0.0);
    const Eigen::MatrixXd kd = kernel_matrix(b, xh, xh, h.discrepancy);
    EXPECT_LE((K.bottomRightCorner(5, 5) - kd).cwiseAbs().maxCoeff(), 1e-12);

    h.rho = 1.7;
    K = mf_covariance(b, xl, xh, h);
    const Eigen::MatrixXd kl_lh = kernel_matrix(b, xl, xh, h.low);
    const Eigen::MatrixXd kl_hh = kernel_matrix(b, xh, xh, h.low);
    EXPECT_LE((K.topLeftCorner(12, 12) - kernel_matrix(b, xl, xl, h.low)).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LE((K.topRightCorner(12, 5) - 1.7 * kl_lh).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LE((K.bottomRightCorner(5, 5) - (1.7 * 1.7 * kl_hh + kd)).cwiseAbs().maxCoeff(), 1e-12);

    h.rho = 1.0;
    h.discrepancy.amplitude = 1e-9;
    K = mf_covariance(b, xl, xh, h);
    EXPECT_LE((K.bottomRightCorner(5, 5) - kl_hh).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LE((K - K.transpose()).cwiseAbs().maxCoeff(), 0.0);
}

TEST(MfCovariance, PsdOnRandomDraws) {
    const auto& b = *small_basis();
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        const auto xl = random_nodes(30, 10 + trial);
        const auto xh = random_nodes(10, 40 + trial);
        auto h = sample_hyper(rng);
        h.noise_low = h.noise_high = 0.0;
        const Eigen::MatrixXd K = mf_covariance(b, xl, xh, h);
        const double min_eig = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(K, Eigen::EigenvaluesOnly).eigenvalues()[0];
        EXPECT_GE(min_eig, -1e-8 * K.trace() / static_cast<double>(K.rows()));
    }
}

TEST(MfNlml, GradientMatchesFiniteDifferences) {
    const auto& b = *small_basis();
    const auto xl = random_nodes(20, 5);
    const auto xh = random_nodes(6, 6);
    const Eigen::VectorXd yl = random_vector(20, 7);
    const Eigen::VectorXd yh = random_vector(6, 8);
    std::mt19937_64 rng(9);
    auto unpack = [](const Eigen::VectorXd& p) {
        MfHyperparameters h;
        h.low = {std::exp(p[0]), std::exp(p[1]), 2.5};
        h.discrepancy = {std::exp(p[2]), std::exp(p[3]), 2.5};
        h.rho = p[4];
        h.noise_low = std::exp(p[5]);
        h.noise_high = std::exp(p[6]);
        return h;
    };
    for (int trial = 0; trial < 10; ++trial) {
        const auto h0 = sample_hyper(rng);
        Eigen::VectorXd p(kMfParamCount);
        p << std::log(h0.low.amplitude), std::log(h0.low.length_scale), std::log(h0.discrepancy.amplitude),
            std::log(h0.discrepancy.length_scale), h0.rho, std::log(h0.noise_low), std::log(h0.noise_high);
        const auto g = mf_nlml_with_gradient(b, xl, yl, xh, yh, unpack(p)).gradient;
        const double step = 1e-5;
        for (int i = 0; i < kMfParamCount; ++i) {
            Eigen::VectorXd a = p, c = p;
            a[i] += step;
            c[i] -= step;
            const double fd = (mf_nlml_with_gradient(b, xl, yl, xh, yh, unpack(a)).value -
                               mf_nlml_with_gradient(b, xl, yl, xh, yh, unpack(c)).value) /
                              (2 * step);
            EXPECT_LE(std::abs(g[i] - fd), 1e-5 * std::max(1.0, std::abs(fd))) << trial << " " << i;
        }
    }
}

TEST(MfPosterior, ZeroRhoReducesToSingleFidelity) {
    const auto basis = small_basis();
    const auto xl = random_nodes(25, 11);
    const auto xh = random_nodes(7, 12);
    const Eigen::VectorXd yl = random_vector(25, 13);
    const Eigen::VectorXd yh = random_vector(7, 14);
    MfHyperparameters h;
    h.low = {1.0, 5.0, 2.5};
    h.discrepancy = {0.8, 7.0, 2.5};
    h.rho = 0.0;
    h.noise_low = 1e-4;
    h.noise_high = 1e-4;
    const auto mf = MfGpModel::condition(basis, xl, yl, xh, yh, h).posterior_all();
    const auto sf = GpModel::condition(basis, xh, yh, {h.discrepancy, h.noise_high}).posterior_all();
    EXPECT_LE((mf.means - sf.means).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_LE((mf.variances - sf.variances).cwiseAbs().maxCoeff(), 1e-8);

    const auto hf_only = MfGpModel::condition(basis, {}, Eigen::VectorXd(), xh, yh, h).posterior_all();
    EXPECT_LE((hf_only.means - sf.means).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(MfPosterior, VanishingDiscrepancyScalesLowFidelityMean) {
    const auto basis = small_basis();
    const auto xl = random_nodes(30, 15);
    const Eigen::VectorXd yl = random_vector(30, 16);
    const double rho = 1.6;
    MfHyperparameters h;
    h.low = {1.0, 6.0, 2.5};
    h.discrepancy = {1e-7, 6.0, 2.5};
    h.rho = rho;
    h.noise_low = 1e-6;
    h.noise_high = 1e-6;
    const auto lf = GpModel::condition(basis, xl, yl, {h.low, h.noise_low});
    // HF observations consistent with the LF posterior carry no new information.
    const auto xh = random_nodes(4, 17);
    const Eigen::VectorXd yh = rho * lf.posterior(xh).means;
    const auto mf = MfGpModel::condition(basis, xl, yl, xh, yh, h).posterior_all();
    const Eigen::VectorXd expected = rho * lf.posterior_all().means;
    EXPECT_LE((mf.means - expected).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(MfPosterior, InterpolatesHighFidelityData) {
    const auto basis = small_basis();
    const auto xl = random_nodes(20, 18);
    const auto xh = random_nodes(6, 19);
    const Eigen::VectorXd yl = random_vector(20, 20);
    const Eigen::VectorXd yh = (random_vector(6, 21).array() + 3.0).matrix();
    MfHyperparameters h;
    h.low = {1.0, 5.0, 2.5};
    h.discrepancy = {0.5, 5.0, 2.5};
    h.rho = 0.9;
    h.noise_low = 0.0;
    h.noise_high = 0.0;
    const auto post = MfGpModel::condition(basis, xl, yl, xh, yh, h, true).posterior(xh);
    for (Eigen::Index i = 0; i < yh.size(); ++i) EXPECT_NEAR(post.means[i] / yh[i], 1.0, 1e-6);

    h.noise_high = 1e-3;
    const auto noisy = MfGpModel::condition(basis, xl, yl, xh, yh, h).posterior(xh);
    EXPECT_LE(noisy.variances.maxCoeff(), 1e-3 + 1e-9);
}

TEST(MfPosterior, PermutationInvariance) {
    const auto basis = small_basis();
    auto xl = random_nodes(20, 22);
    auto xh = random_nodes(6, 23);
    Eigen::VectorXd yl = random_vector(20, 24);
    Eigen::VectorXd yh = random_vector(6, 25);
    std::mt19937_64 rng(26);
    const auto h = sample_hyper(rng);
    const auto a = MfGpModel::condition(basis, xl, yl, xh, yh, h, true).posterior_all();
    std::reverse(xl.begin(), xl.end());
    yl.reverseInPlace();
    std::reverse(xh.begin(), xh.end());
    yh.reverseInPlace();
    const auto b = MfGpModel::condition(basis, xl, yl, xh, yh, h, true).posterior_all();
    EXPECT_LE((a.means - b.means).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_LE((a.variances - b.variances).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(MfFit, RecoversLinearCoupling) {
    const auto basis = small_basis();
    const auto nodes = all_nodes(basis->num_nodes());
    const Eigen::MatrixXd K = kernel_matrix(*basis, nodes, nodes, {1.0, 10.0, 2.5});
    Eigen::LLT<Eigen::MatrixXd> llt;
    factorize_with_jitter(K, 1e-8, llt);
    const Eigen::VectorXd f = llt.matrixL() * random_vector(K.rows(), 27);

    const auto xl = random_nodes(35, 28);
    Eigen::VectorXd yl(35);
    for (int i = 0; i < 35; ++i) yl[i] = f[xl[i].index];
    yl.array() -= yl.mean();
    const std::vector<NodeId> xh(xl.begin(), xl.begin() + 8);
    const Eigen::VectorXd yh = 2.0 * yl.head(8);

    MfFitOptions opts;
    opts.length_reference = small_mesh().diameter();
    const auto model = fit_mf_hyperparameters(basis, xl, yl, xh, yh, opts);
    const auto& h = model.hyperparameters();
    EXPECT_GE(h.rho, 1.8);
    EXPECT_LE(h.rho, 2.2);
    EXPECT_LT(h.discrepancy.amplitude, 0.1 * h.low.amplitude);
}

TEST(MfFit, OptimumBeatsSampledPoints) {
    const auto basis = small_basis();
    const auto xl = random_nodes(25, 29);
    const auto xh = random_nodes(5, 30);
    const Eigen::VectorXd yl = random_vector(25, 31);
    const Eigen::VectorXd yh = random_vector(5, 32);
    MfFitOptions opts;
    opts.length_reference = small_mesh().diameter();
    const auto model = fit_mf_hyperparameters(basis, xl, yl, xh, yh, opts);
    const Eigen::VectorXd syl = (yl.array() - model.offset()) / model.scale();
    const Eigen::VectorXd syh = (yh.array() - model.offset()) / model.scale();
    std::mt19937_64 rng(33);
    for (int i = 0; i < 20; ++i) {
        const auto h = sample_hyper(rng);
        EXPECT_LE(model.nlml(), mf_nlml_with_gradient(*basis, xl, syl, xh, syh, h).value + 1e-9);
    }
}

TEST(MfFit, Preconditions) {
    const auto basis = small_basis();
    const auto xh = random_nodes(5, 34);
    const Eigen::VectorXd yh = random_vector(5, 35);
    EXPECT_THROW(fit_mf_hyperparameters(basis, {}, Eigen::VectorXd(), xh, yh, {}), PreconditionError);
    EXPECT_THROW(MfGpModel::condition(basis, xh, yh, {}, Eigen::VectorXd(), {}), PreconditionError);
}

TEST(MfModelText, RoundTrip) {
    const auto basis = small_basis();
    const auto xl = random_nodes(10, 36);
    const auto xh = random_nodes(3, 37);
    const Eigen::VectorXd yl = random_vector(10, 38);
    const Eigen::VectorXd yh = random_vector(3, 39);
    std::mt19937_64 rng(40);
    const auto model = MfGpModel::condition(basis, xl, yl, xh, yh, sample_hyper(rng), true);
    const auto back = MfGpModel::from_text(model.to_text(), basis);
    EXPECT_EQ(back.to_text(), model.to_text());
    EXPECT_LE((back.posterior_all().means - model.posterior_all().means).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_NE(model.to_text().find("\"low_node_ids\""), std::string::npos);
}
