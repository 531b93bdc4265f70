#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "easbo/gp.hpp"

namespace easbo {

/// Autoregressive two-fidelity prior: f_high = rho * f_low + delta, where
/// f_low and delta are independent spectral-kernel GPs on the same basis.
struct MfHyperparameters {
    KernelParams low;
    KernelParams discrepancy;
    double rho = 1.0;
    double noise_low = 1e-6;
    double noise_high = 1e-6;
};

/// Packed log-parameters for optimisation:
/// [log eta_L, log ell_L, log eta_D, log ell_D, rho, log noise_L, log noise_H].
inline constexpr int kMfParamCount = 7;

struct MfNlmlGradient {
    double value = 0.0;
    Eigen::Matrix<double, kMfParamCount, 1> gradient = Eigen::Matrix<double, kMfParamCount, 1>::Zero();
};

/// Joint covariance of [y_low; y_high] including noise.
Eigen::MatrixXd mf_covariance(const EigenBasis& basis, std::span<const NodeId> low_inputs,
                              std::span<const NodeId> high_inputs, const MfHyperparameters& hyper);

MfNlmlGradient mf_nlml_with_gradient(const EigenBasis& basis, std::span<const NodeId> low_inputs,
                                     const Eigen::VectorXd& low_y, std::span<const NodeId> high_inputs,
                                     const Eigen::VectorXd& high_y, const MfHyperparameters& hyper);

/// Trained two-fidelity GP; posterior() predicts the high-fidelity function.
/// Observations are standardized with the low-fidelity statistics (falling
/// back to high-fidelity statistics when there are no low-fidelity points).
class MfGpModel {
public:
    static MfGpModel condition(std::shared_ptr<const EigenBasis> basis, std::vector<NodeId> low_inputs,
                               Eigen::VectorXd low_y, std::vector<NodeId> high_inputs, Eigen::VectorXd high_y,
                               const MfHyperparameters& hyper, bool standardize = false);

    Posterior posterior(std::span<const NodeId> query) const;
    Posterior posterior_all() const;

    const MfHyperparameters& hyperparameters() const { return hyper_; }
    const std::vector<NodeId>& low_inputs() const { return low_inputs_; }
    const std::vector<NodeId>& high_inputs() const { return high_inputs_; }
    const Eigen::VectorXd& low_observations() const { return low_y_; }
    const Eigen::VectorXd& high_observations() const { return high_y_; }
    double offset() const { return offset_; }
    double scale() const { return scale_; }
    double nlml() const { return nlml_; }

    std::string to_text() const;
    static MfGpModel from_text(const std::string& text, std::shared_ptr<const EigenBasis> basis);

private:
    std::shared_ptr<const EigenBasis> basis_;
    std::vector<NodeId> low_inputs_, high_inputs_;
    Eigen::VectorXd low_y_, high_y_;
    MfHyperparameters hyper_;
    bool standardized_ = false;
    double offset_ = 0.0;
    double scale_ = 1.0;
    double nlml_ = 0.0;
    Eigen::LLT<Eigen::MatrixXd> llt_;
    Eigen::VectorXd weights_;
};

struct MfFitOptions {
    int restarts = 8;
    std::uint64_t seed = 0;
    double length_reference = 1.0;
    double smoothness = 2.5;
    bool standardize = true;
    int max_iterations = 200;
};

/// Joint marginal-likelihood fit of all seven parameters. rho is bounded to
/// [-5, 5]; every restart starts at rho = 1.
MfGpModel fit_mf_hyperparameters(std::shared_ptr<const EigenBasis> basis, std::vector<NodeId> low_inputs,
                                 Eigen::VectorXd low_y, std::vector<NodeId> high_inputs, Eigen::VectorXd high_y,
                                 const MfFitOptions& options);

}  // namespace easbo
