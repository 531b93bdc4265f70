#include "easbo/mf_gp.hpp"

#include <cmath>
#include <random>

#include "json.hpp"

#include "easbo/errors.hpp"
#include "easbo/lbfgs.hpp"

namespace easbo {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;

struct Blocks {
    Eigen::MatrixXd low_ll, low_lh, low_hh;  // k_L blocks
    Eigen::MatrixXd disc_hh;                 // k_D(X_H, X_H)
};

Blocks kernel_blocks(const SpectralKernel& low, const SpectralKernel& disc, std::span<const NodeId> xl,
                     std::span<const NodeId> xh) {
    Blocks b;
    b.low_ll = low.matrix(xl, xl);
    b.low_lh = low.matrix(xl, xh);
    b.low_hh = low.matrix(xh, xh);
    b.disc_hh = disc.matrix(xh, xh);
    return b;
}

Eigen::MatrixXd assemble(const Blocks& b, double rho) {
    const auto nl = b.low_ll.rows();
    const auto nh = b.low_hh.rows();
    Eigen::MatrixXd k(nl + nh, nl + nh);
    k.topLeftCorner(nl, nl) = b.low_ll;
    k.topRightCorner(nl, nh) = rho * b.low_lh;
    k.bottomLeftCorner(nh, nl) = rho * b.low_lh.transpose();
    k.bottomRightCorner(nh, nh) = rho * rho * b.low_hh + b.disc_hh;
    return k;
}

// Adds per-block noise with the jitter floor; returns false if factorization failed.
bool factorize(Eigen::MatrixXd k, Eigen::Index nl, double noise_low, double noise_high,
               Eigen::LLT<Eigen::MatrixXd>& llt, double& used_low, double& used_high) {
    const double mean_diag = std::max(k.diagonal().mean(), 1e-300);
    double jitter = kJitterFloor * mean_diag;
    while (jitter <= kMaxJitter * mean_diag) {
        used_low = std::max(noise_low, jitter);
        used_high = std::max(noise_high, jitter);
        Eigen::MatrixXd kk = k;
        kk.diagonal().head(nl).array() += used_low;
        kk.diagonal().tail(k.rows() - nl).array() += used_high;
        llt.compute(kk);
        if (llt.info() == Eigen::Success && (llt.matrixLLT().diagonal().array() > 0).all()) return true;
        jitter *= 10.0;
    }
    return false;
}

MfHyperparameters unpack(const Eigen::VectorXd& x, double smoothness) {
    MfHyperparameters h;
    h.low = {std::exp(x[0]), std::exp(x[1]), smoothness};
    h.discrepancy = {std::exp(x[2]), std::exp(x[3]), smoothness};
    h.rho = x[4];
    h.noise_low = std::exp(x[5]);
    h.noise_high = std::exp(x[6]);
    return h;
}

void check_inputs(std::span<const NodeId> xl, const Eigen::VectorXd& yl, std::span<const NodeId> xh,
                  const Eigen::VectorXd& yh) {
    if (static_cast<Eigen::Index>(xl.size()) != yl.size() || static_cast<Eigen::Index>(xh.size()) != yh.size()) {
        throw PreconditionError("multi-fidelity inputs and observations differ in length");
    }
    if (xh.empty()) throw PreconditionError("multi-fidelity GP needs at least one high-fidelity observation");
}

}  // namespace

Eigen::MatrixXd mf_covariance(const EigenBasis& basis, std::span<const NodeId> low_inputs,
                              std::span<const NodeId> high_inputs, const MfHyperparameters& hyper) {
    const SpectralKernel low(basis, hyper.low), disc(basis, hyper.discrepancy);
    Eigen::MatrixXd k = assemble(kernel_blocks(low, disc, low_inputs, high_inputs), hyper.rho);
    const auto nl = static_cast<Eigen::Index>(low_inputs.size());
    k.diagonal().head(nl).array() += hyper.noise_low;
    k.diagonal().tail(k.rows() - nl).array() += hyper.noise_high;
    return k;
}

MfNlmlGradient mf_nlml_with_gradient(const EigenBasis& basis, std::span<const NodeId> low_inputs,
                                     const Eigen::VectorXd& low_y, std::span<const NodeId> high_inputs,
                                     const Eigen::VectorXd& high_y, const MfHyperparameters& hyper) {
    check_inputs(low_inputs, low_y, high_inputs, high_y);
    const SpectralKernel low(basis, hyper.low), disc(basis, hyper.discrepancy);
    const Blocks b = kernel_blocks(low, disc, low_inputs, high_inputs);
    const auto nl = static_cast<Eigen::Index>(low_inputs.size());
    const auto nh = static_cast<Eigen::Index>(high_inputs.size());
    const double rho = hyper.rho;

    Eigen::LLT<Eigen::MatrixXd> llt;
    double used_low = 0, used_high = 0;
    if (!factorize(assemble(b, rho), nl, hyper.noise_low, hyper.noise_high, llt, used_low, used_high)) {
        throw ComputeError("multi-fidelity covariance factorization failed");
    }
    Eigen::VectorXd y(nl + nh);
    y << low_y, high_y;
    const Eigen::VectorXd alpha = llt.solve(y);

    MfNlmlGradient out;
    out.value = llt.matrixLLT().diagonal().array().log().sum() + 0.5 * y.dot(alpha) +
                static_cast<double>(nl + nh) * kHalfLog2Pi;

    const Eigen::MatrixXd W =
        llt.solve(Eigen::MatrixXd::Identity(nl + nh, nl + nh)) - alpha * alpha.transpose();
    auto half_trace = [&](const Eigen::MatrixXd& dk) { return 0.5 * W.cwiseProduct(dk).sum(); };

    const Eigen::VectorXd dlw = low.weights_dlog_length();
    const Eigen::VectorXd ddw = disc.weights_dlog_length();
    Blocks dlen = b;
    dlen.low_ll = low.matrix_with_weights(low_inputs, low_inputs, dlw);
    dlen.low_lh = low.matrix_with_weights(low_inputs, high_inputs, dlw);
    dlen.low_hh = low.matrix_with_weights(high_inputs, high_inputs, dlw);
    dlen.disc_hh.setZero();

    Blocks low_only = b;
    low_only.disc_hh.setZero();
    out.gradient[0] = half_trace(2.0 * assemble(low_only, rho));
    out.gradient[1] = half_trace(assemble(dlen, rho));

    Eigen::MatrixXd dk = Eigen::MatrixXd::Zero(nl + nh, nl + nh);
    dk.bottomRightCorner(nh, nh) = 2.0 * b.disc_hh;
    out.gradient[2] = half_trace(dk);
    dk.bottomRightCorner(nh, nh) = disc.matrix_with_weights(high_inputs, high_inputs, ddw);
    out.gradient[3] = half_trace(dk);

    dk.setZero();
    dk.topRightCorner(nl, nh) = b.low_lh;
    dk.bottomLeftCorner(nh, nl) = b.low_lh.transpose();
    dk.bottomRightCorner(nh, nh) = 2.0 * rho * b.low_hh;
    out.gradient[4] = half_trace(dk);

    out.gradient[5] = hyper.noise_low >= used_low ? 0.5 * hyper.noise_low * W.diagonal().head(nl).sum() : 0.0;
    out.gradient[6] = hyper.noise_high >= used_high ? 0.5 * hyper.noise_high * W.diagonal().tail(nh).sum() : 0.0;
    return out;
}

MfGpModel MfGpModel::condition(std::shared_ptr<const EigenBasis> basis, std::vector<NodeId> low_inputs,
                               Eigen::VectorXd low_y, std::vector<NodeId> high_inputs, Eigen::VectorXd high_y,
                               const MfHyperparameters& hyper, bool standardize) {
    if (!basis) throw PreconditionError("GP needs an eigenbasis");
    check_inputs(low_inputs, low_y, high_inputs, high_y);
    MfGpModel m;
    m.basis_ = std::move(basis);
    m.low_inputs_ = std::move(low_inputs);
    m.high_inputs_ = std::move(high_inputs);
    m.low_y_ = std::move(low_y);
    m.high_y_ = std::move(high_y);
    m.hyper_ = hyper;
    m.standardized_ = standardize;
    if (standardize) {
        const Eigen::VectorXd& ref = m.low_y_.size() > 0 ? m.low_y_ : m.high_y_;
        m.offset_ = ref.mean();
        const double var = (ref.array() - m.offset_).square().mean();
        m.scale_ = var > 0 ? std::sqrt(var) : 1.0;
    }
    const auto nl = m.low_y_.size();
    const auto nh = m.high_y_.size();
    Eigen::VectorXd y(nl + nh);
    y << m.low_y_, m.high_y_;
    y = (y.array() - m.offset_) / m.scale_;

    const SpectralKernel low(*m.basis_, hyper.low), disc(*m.basis_, hyper.discrepancy);
    double used_low = 0, used_high = 0;
    if (!factorize(assemble(kernel_blocks(low, disc, m.low_inputs_, m.high_inputs_), hyper.rho), nl, hyper.noise_low,
                   hyper.noise_high, m.llt_, used_low, used_high)) {
        throw ComputeError("multi-fidelity covariance factorization failed");
    }
    m.weights_ = m.llt_.solve(y);
    m.nlml_ = m.llt_.matrixLLT().diagonal().array().log().sum() + 0.5 * y.dot(m.weights_) +
              static_cast<double>(nl + nh) * kHalfLog2Pi;
    return m;
}

Posterior MfGpModel::posterior(std::span<const NodeId> query) const {
    const SpectralKernel low(*basis_, hyper_.low), disc(*basis_, hyper_.discrepancy);
    const double rho = hyper_.rho;
    const auto nl = static_cast<Eigen::Index>(low_inputs_.size());
    const auto nh = static_cast<Eigen::Index>(high_inputs_.size());
    const auto nq = static_cast<Eigen::Index>(query.size());

    Eigen::MatrixXd kq(nq, nl + nh);
    if (nl > 0) kq.leftCols(nl) = rho * low.matrix(query, low_inputs_);
    kq.rightCols(nh) = rho * rho * low.matrix(query, high_inputs_) + disc.matrix(query, high_inputs_);
    const Eigen::VectorXd prior = rho * rho * low.diagonal(query) + disc.diagonal(query);

    Posterior p;
    p.means = kq * weights_;
    const Eigen::MatrixXd V = llt_.matrixL().solve(kq.transpose());
    p.variances = prior - V.colwise().squaredNorm().transpose();
    for (Eigen::Index i = 0; i < nq; ++i) {
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

Posterior MfGpModel::posterior_all() const {
    const auto nodes = all_nodes(basis_->num_nodes());
    return posterior(nodes);
}

std::string MfGpModel::to_text() const {
    nlohmann::json j;
    auto ids = [](const std::vector<NodeId>& v) {
        std::vector<std::uint32_t> out;
        for (auto n : v) out.push_back(n.index);
        return out;
    };
    auto vec = [](const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
    j["kind"] = "mf_gp";
    j["low_node_ids"] = ids(low_inputs_);
    j["low_y"] = vec(low_y_);
    j["high_node_ids"] = ids(high_inputs_);
    j["high_y"] = vec(high_y_);
    j["low"] = {{"eta", hyper_.low.amplitude}, {"length_scale", hyper_.low.length_scale}, {"nu", hyper_.low.smoothness}};
    j["discrepancy"] = {{"eta", hyper_.discrepancy.amplitude},
                        {"length_scale", hyper_.discrepancy.length_scale},
                        {"nu", hyper_.discrepancy.smoothness}};
    j["rho"] = hyper_.rho;
    j["noise_low"] = hyper_.noise_low;
    j["noise_high"] = hyper_.noise_high;
    j["standardized"] = standardized_;
    j["nlml"] = nlml_;
    return j.dump(2);
}

MfGpModel MfGpModel::from_text(const std::string& text, std::shared_ptr<const EigenBasis> basis) {
    try {
        const auto j = nlohmann::json::parse(text);
        auto ids = [](const nlohmann::json& a) {
            std::vector<NodeId> out;
            for (auto v : a.get<std::vector<std::uint32_t>>()) out.emplace_back(v);
            return out;
        };
        auto vec = [](const nlohmann::json& a) {
            const auto v = a.get<std::vector<double>>();
            return Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
        };
        auto kp = [](const nlohmann::json& a) {
            return KernelParams{a.at("eta").get<double>(), a.at("length_scale").get<double>(), a.at("nu").get<double>()};
        };
        MfHyperparameters h;
        h.low = kp(j.at("low"));
        h.discrepancy = kp(j.at("discrepancy"));
        h.rho = j.at("rho").get<double>();
        h.noise_low = j.at("noise_low").get<double>();
        h.noise_high = j.at("noise_high").get<double>();
        return condition(std::move(basis), ids(j.at("low_node_ids")), vec(j.at("low_y")), ids(j.at("high_node_ids")),
                         vec(j.at("high_y")), h, j.at("standardized").get<bool>());
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("bad multi-fidelity model record: ") + e.what());
    }
}

MfGpModel fit_mf_hyperparameters(std::shared_ptr<const EigenBasis> basis, std::vector<NodeId> low_inputs,
                                 Eigen::VectorXd low_y, std::vector<NodeId> high_inputs, Eigen::VectorXd high_y,
                                 const MfFitOptions& options) {
    if (!basis) throw PreconditionError("GP needs an eigenbasis");
    check_inputs(low_inputs, low_y, high_inputs, high_y);
    if (low_inputs.empty()) throw PreconditionError("multi-fidelity fit needs low-fidelity observations");
    if (options.restarts < 1) throw PreconditionError("restarts must be >= 1");

    double offset = 0.0, scale = 1.0;
    if (options.standardize) {
        offset = low_y.mean();
        const double var = (low_y.array() - offset).square().mean();
        scale = var > 0 ? std::sqrt(var) : 1.0;
    }
    const Eigen::VectorXd yl = (low_y.array() - offset) / scale;
    const Eigen::VectorXd yh = (high_y.array() - offset) / scale;
    double y_std = 1.0;
    if (!options.standardize) {
        Eigen::VectorXd all(yl.size() + yh.size());
        all << yl, yh;
        y_std = std::max(std::sqrt((all.array() - all.mean()).square().mean()), 1e-12);
    }
    const double y_var = y_std * y_std;
    const double lref = options.length_reference;

    Eigen::VectorXd lower(kMfParamCount), upper(kMfParamCount);
    lower << std::log(1e-3 * y_std), std::log(0.01 * lref), std::log(1e-3 * y_std), std::log(0.01 * lref), -5.0,
        std::log(kJitterFloor * y_var), std::log(kJitterFloor * y_var);
    upper << std::log(1e3 * y_std), std::log(2.0 * lref), std::log(1e3 * y_std), std::log(2.0 * lref), 5.0,
        std::log(y_var), std::log(y_var);

    const GradientObjective objective = [&](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
        const auto r = mf_nlml_with_gradient(*basis, low_inputs, yl, high_inputs, yh, unpack(x, options.smoothness));
        g = r.gradient;
        return r.value;
    };

    std::mt19937_64 rng(mix_seed(options.seed, 0x3F17));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    LbfgsOptions lopts;
    lopts.max_iterations = options.max_iterations;

    double best_value = std::numeric_limits<double>::infinity();
    Eigen::VectorXd best_x;
    std::string failures;
    for (int r = 0; r < options.restarts; ++r) {
        Eigen::VectorXd x0(kMfParamCount);
        for (int i = 0; i < kMfParamCount; ++i) x0[i] = lower[i] + unit(rng) * (upper[i] - lower[i]);
        x0[4] = 1.0;
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
    if (best_x.size() == 0) throw ComputeError("all multi-fidelity restarts failed:" + failures);
    return MfGpModel::condition(std::move(basis), std::move(low_inputs), std::move(low_y), std::move(high_inputs),
                                std::move(high_y), unpack(best_x, options.smoothness), options.standardize);
}

}  // namespace easbo
