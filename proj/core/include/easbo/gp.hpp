#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "easbo/fem.hpp"
#include "easbo/kernel.hpp"
#include "easbo/mesh.hpp"

namespace easbo {

struct GpHyperparameters {
    KernelParams kernel;
    double noise_variance = 1e-6;
};

/// Posterior marginals at query nodes.
struct Posterior {
    Eigen::VectorXd means;
    Eigen::VectorXd variances;
    /// Largest magnitude by which a negative variance was clamped to zero.
    double max_clamp = 0.0;
};

/// Relative jitter floor added as a lower bound on the noise variance and
/// escalated x10 on factorization failure up to kMaxJitter.
inline constexpr double kJitterFloor = 1e-10;
inline constexpr double kMaxJitter = 1e-4;

/// Cholesky factor of K + max(noise, jitter) I with jitter escalation.
/// Returns the effective noise actually used.
double factorize_with_jitter(const Eigen::MatrixXd& kernel, double noise_variance,
                             Eigen::LLT<Eigen::MatrixXd>& llt);

/// Negative log marginal likelihood
///   1/2 log|K + s^2 I| + 1/2 y^T (K + s^2 I)^{-1} y + N/2 log(2 pi).
double nlml(const EigenBasis& basis, std::span<const NodeId> inputs, const Eigen::VectorXd& y,
            const GpHyperparameters& hyper);

struct NlmlGradient {
    double value = 0.0;
    /// d/d(log eta), d/d(log ell), d/d(log noise variance)
    Eigen::Vector3d gradient = Eigen::Vector3d::Zero();
};

NlmlGradient nlml_with_gradient(const EigenBasis& basis, std::span<const NodeId> inputs, const Eigen::VectorXd& y,
                                const GpHyperparameters& hyper);

/// Trained single-fidelity GP. Immutable; posterior queries are thread-safe.
///
/// When built with standardization, hyperparameters refer to the
/// standardized observations (zero mean, unit variance) and predictions are
/// mapped back to the original units.
class GpModel {
public:
    static GpModel condition(std::shared_ptr<const EigenBasis> basis, std::vector<NodeId> inputs,
                             Eigen::VectorXd observations, const GpHyperparameters& hyper, bool standardize = false);

    Posterior posterior(std::span<const NodeId> query) const;
    Posterior posterior_all() const;

    const std::vector<NodeId>& inputs() const { return inputs_; }
    const Eigen::VectorXd& observations() const { return observations_; }
    const GpHyperparameters& hyperparameters() const { return hyper_; }
    double offset() const { return offset_; }
    double scale() const { return scale_; }
    bool standardized() const { return standardized_; }
    /// NLML of the (possibly standardized) training data.
    double nlml() const { return nlml_; }
    const EigenBasis& basis() const { return *basis_; }

    /// Structured text record (JSON) with node ids, y, hyperparameters.
    std::string to_text() const;
    static GpModel from_text(const std::string& text, std::shared_ptr<const EigenBasis> basis);

private:
    std::shared_ptr<const EigenBasis> basis_;
    std::vector<NodeId> inputs_;
    Eigen::VectorXd observations_;
    GpHyperparameters hyper_;
    bool standardized_ = false;
    double offset_ = 0.0;
    double scale_ = 1.0;
    double noise_used_ = 0.0;
    double nlml_ = 0.0;
    Eigen::LLT<Eigen::MatrixXd> llt_;
    Eigen::VectorXd weights_;  // (K + s^2 I)^{-1} y_std
};

struct GpFitOptions {
    int restarts = 8;
    std::uint64_t seed = 0;
    /// Reference length for the length-scale bounds [0.01, 2] x reference (mm);
    /// usually the mesh diameter.
    double length_reference = 1.0;
    double smoothness = 2.5;
    bool standardize = true;
    int max_iterations = 200;
};

/// Maximizes the marginal likelihood over (log eta, log ell, log noise) with
/// box-constrained L-BFGS from log-uniform random starts; returns the restart
/// with the lowest NLML (ties to the lower restart index).
GpModel fit_hyperparameters(std::shared_ptr<const EigenBasis> basis, std::vector<NodeId> inputs,
                            Eigen::VectorXd observations, const GpFitOptions& options);

/// Splitmix64 step, used to derive independent seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace easbo
