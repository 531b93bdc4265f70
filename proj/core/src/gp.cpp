#include "easbo/gp.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "json.hpp"

#include "easbo/errors.hpp"
#include "easbo/lbfgs.hpp"

namespace easbo {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

double factorize_with_jitter(const Eigen::MatrixXd& kernel, double noise_variance,
                             Eigen::LLT<Eigen::MatrixXd>& llt) {
    const auto n = kernel.rows();
    const double mean_diag = n > 0 ? std::max(kernel.diagonal().mean(), 0.0) : 0.0;
    double jitter = kJitterFloor * std::max(mean_diag, 1e-300);
    for (;;) {
        const double noise = std::max(noise_variance, jitter);
        Eigen::MatrixXd k = kernel;
        k.diagonal().array() += noise;
        llt.compute(k);
        if (llt.info() == Eigen::Success && (llt.matrixLLT().diagonal().array() > 0).all()) return noise;
        jitter *= 10.0;
        if (jitter > kMaxJitter * std::max(mean_diag, 1e-300)) {
            throw ComputeError("covariance factorization failed after jitter escalation");
        }
    }
}

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;

double log_det(const Eigen::LLT<Eigen::MatrixXd>& llt) {
    return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

}  // namespace

double nlml(const EigenBasis& basis, std::span<const NodeId> inputs, const Eigen::VectorXd& y,
            const GpHyperparameters& hyper) {
    return nlml_with_gradient(basis, inputs, y, hyper).value;
}

NlmlGradient nlml_with_gradient(const EigenBasis& basis, std::span<const NodeId> inputs, const Eigen::VectorXd& y,
                                const GpHyperparameters& hyper) {
    if (inputs.empty() || static_cast<Eigen::Index>(inputs.size()) != y.size()) {
        throw PreconditionError("nlml needs matching, non-empty inputs and observations");
    }
    const SpectralKernel kern(basis, hyper.kernel);
    const Eigen::MatrixXd K = kern.matrix(inputs, inputs);
    Eigen::LLT<Eigen::MatrixXd> llt;
    const double noise = factorize_with_jitter(K, hyper.noise_variance, llt);
    const Eigen::VectorXd alpha = llt.solve(y);
    const auto n = static_cast<double>(y.size());

    NlmlGradient out;
    out.value = 0.5 * log_det(llt) + 0.5 * y.dot(alpha) + n * kHalfLog2Pi;

    // dL/dtheta = 1/2 tr((K^{-1} - alpha alpha^T) dK/dtheta)
    const Eigen::MatrixXd Kinv = llt.solve(Eigen::MatrixXd::Identity(y.size(), y.size()));
    const Eigen::MatrixXd W = Kinv - alpha * alpha.transpose();
    const Eigen::MatrixXd dK_len = kern.matrix_with_weights(inputs, inputs, kern.weights_dlog_length());
    out.gradient[0] = 0.5 * W.cwiseProduct(2.0 * K).sum();
    out.gradient[1] = 0.5 * W.cwiseProduct(dK_len).sum();
    out.gradient[2] = hyper.noise_variance >= noise ? 0.5 * hyper.noise_variance * W.trace() : 0.0;
    return out;
}

GpModel GpModel::condition(std::shared_ptr<const EigenBasis> basis, std::vector<NodeId> inputs,
                           Eigen::VectorXd observations, const GpHyperparameters& hyper, bool standardize) {
    if (!basis) throw PreconditionError("GP needs an eigenbasis");
    if (inputs.empty() || static_cast<Eigen::Index>(inputs.size()) != observations.size()) {
        throw PreconditionError("GP needs matching, non-empty inputs and observations");
    }
    GpModel m;
    m.basis_ = std::move(basis);
    m.inputs_ = std::move(inputs);
    m.observations_ = std::move(observations);
    m.hyper_ = hyper;
    m.standardized_ = standardize;
    if (standardize) {
        m.offset_ = m.observations_.mean();
        const double var = (m.observations_.array() - m.offset_).square().mean();
        m.scale_ = var > 0 ? std::sqrt(var) : 1.0;
    }
    const Eigen::VectorXd ys = (m.observations_.array() - m.offset_) / m.scale_;
    const SpectralKernel kern(*m.basis_, hyper.kernel);
    const Eigen::MatrixXd K = kern.matrix(m.inputs_, m.inputs_);
    m.noise_used_ = factorize_with_jitter(K, hyper.noise_variance, m.llt_);
    m.weights_ = m.llt_.solve(ys);
    m.nlml_ = 0.5 * log_det(m.llt_) + 0.5 * ys.dot(m.weights_) + static_cast<double>(ys.size()) * kHalfLog2Pi;
    return m;
}

Posterior GpModel::posterior(std::span<const NodeId> query) const {
    if (llt_.rows() != static_cast<Eigen::Index>(inputs_.size()) || !basis_) {
        throw ComputeError("GP factorization is stale");
    }
    const SpectralKernel kern(*basis_, hyper_.kernel);
    const Eigen::MatrixXd Kq = kern.matrix(query, inputs_);
    const Eigen::VectorXd prior = kern.diagonal(query);
    Posterior p;
    p.means = Kq * weights_;
    const Eigen::MatrixXd V = llt_.matrixL().solve(Kq.transpose());
    p.variances = prior - V.colwise().squaredNorm().transpose();
    for (Eigen::Index i = 0; i < p.variances.size(); ++i) {
        if (p.variances[i] < 0) {
            p.max_clamp = std::max(p.max_clamp, -p.variances[i]);
            p.variances[i] = 0.0;
        }
    }
    p.means = p.means.array() * scale_ + offset_;
    p.variances *= scale_ * scale_;
    p.max_clamp *= scale_ * scale_;
    return p;
}

Posterior GpModel::posterior_all() const {
    const auto nodes = all_nodes(basis_->num_nodes());
    return posterior(nodes);
}

std::string GpModel::to_text() const {
    nlohmann::json j;
    j["kind"] = "gp";
    std::vector<std::uint32_t> ids;
    for (auto n : inputs_) ids.push_back(n.index);
    j["node_ids"] = ids;
    j["y"] = std::vector<double>(observations_.data(), observations_.data() + observations_.size());
    j["eta"] = hyper_.kernel.amplitude;
    j["length_scale"] = hyper_.kernel.length_scale;
    j["nu"] = hyper_.kernel.smoothness;
    j["noise_variance"] = hyper_.noise_variance;
    j["standardized"] = standardized_;
    j["nlml"] = nlml_;
    return j.dump(2);
}

GpModel GpModel::from_text(const std::string& text, std::shared_ptr<const EigenBasis> basis) {
    try {
        const auto j = nlohmann::json::parse(text);
        std::vector<NodeId> ids;
        for (auto v : j.at("node_ids").get<std::vector<std::uint32_t>>()) ids.emplace_back(v);
        const auto y = j.at("y").get<std::vector<double>>();
        GpHyperparameters h;
        h.kernel.amplitude = j.at("eta").get<double>();
        h.kernel.length_scale = j.at("length_scale").get<double>();
        h.kernel.smoothness = j.at("nu").get<double>();
        h.noise_variance = j.at("noise_variance").get<double>();
        return condition(std::move(basis), std::move(ids), Eigen::Map<const Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(y.size())),
                         h, j.at("standardized").get<bool>());
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("bad GP model record: ") + e.what());
    }
}

GpModel fit_hyperparameters(std::shared_ptr<const EigenBasis> basis, std::vector<NodeId> inputs,
                            Eigen::VectorXd observations, const GpFitOptions& options) {
    if (!basis) throw PreconditionError("GP needs an eigenbasis");
    if (inputs.size() < 2 || static_cast<Eigen::Index>(inputs.size()) != observations.size()) {
        throw PreconditionError("hyperparameter fit needs at least two matching observations");
    }
    if (options.restarts < 1) throw PreconditionError("restarts must be >= 1");

    double offset = 0.0, scale = 1.0;
    if (options.standardize) {
        offset = observations.mean();
        const double var = (observations.array() - offset).square().mean();
        scale = var > 0 ? std::sqrt(var) : 1.0;
    }
    const Eigen::VectorXd ys = (observations.array() - offset) / scale;
    const double y_std = options.standardize ? 1.0 : std::max(std::sqrt((ys.array() - ys.mean()).square().mean()), 1e-12);
    const double y_var = y_std * y_std;

    Eigen::Vector3d lower(std::log(1e-3 * y_std), std::log(0.01 * options.length_reference), std::log(kJitterFloor * y_var));
    Eigen::Vector3d upper(std::log(1e3 * y_std), std::log(2.0 * options.length_reference), std::log(y_var));

    auto unpack = [&](const Eigen::VectorXd& x) {
        GpHyperparameters h;
        h.kernel.amplitude = std::exp(x[0]);
        h.kernel.length_scale = std::exp(x[1]);
        h.kernel.smoothness = options.smoothness;
        h.noise_variance = std::exp(x[2]);
        return h;
    };
    const GradientObjective objective = [&](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
        const auto r = nlml_with_gradient(*basis, inputs, ys, unpack(x));
        g = r.gradient;
        return r.value;
    };

    std::mt19937_64 rng(mix_seed(options.seed, 0xF17));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    LbfgsOptions lopts;
    lopts.max_iterations = options.max_iterations;

    double best_value = std::numeric_limits<double>::infinity();
    Eigen::VectorXd best_x;
    std::string failures;
    for (int r = 0; r < options.restarts; ++r) {
        Eigen::VectorXd x0(3);
        for (int i = 0; i < 3; ++i) x0[i] = lower[i] + unit(rng) * (upper[i] - lower[i]);
        try {
            const auto res = minimize_box_lbfgs(objective, x0, lower, upper, lopts);
            if (res.value < best_value) {
                best_value = res.value;
                best_x = res.x;
            }
        } catch (const ComputeError& e) {
            failures += " [restart " + std::to_string(r) + ": " + e.what() + "]";
        }
    }
    if (best_x.size() == 0) throw ComputeError("all hyperparameter restarts failed:" + failures);

    GpModel m = GpModel::condition(std::move(basis), std::move(inputs), std::move(observations), unpack(best_x),
                                   options.standardize);
    return m;
}

}  // namespace easbo
