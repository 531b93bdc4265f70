#pragma once

#include <memory>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "easbo/fem.hpp"
#include "easbo/mesh.hpp"

namespace easbo {

/// Matern-like kernel on the manifold. `smoothness` is nu; the spectral
/// exponent is alpha = nu + d/2 with d the manifold dimension.
struct KernelParams {
    double amplitude = 1.0;     ///< eta (output units)
    double length_scale = 1.0;  ///< ell (mm)
    double smoothness = 2.5;    ///< nu
};

/// Truncated eigen-expansion
///   k(x, x') = eta^2 / C * sum_i (1/ell^2 + lambda_i)^(-alpha) psi_i(x) psi_i(x'),
/// with C chosen so that the node-averaged prior variance equals eta^2.
class SpectralKernel {
public:
    SpectralKernel(const EigenBasis& basis, const KernelParams& params);

    const KernelParams& params() const { return params_; }
    double alpha() const { return alpha_; }
    double normalization() const { return normalization_; }

    /// Spectral weights eta^2/C * (1/ell^2 + lambda_i)^(-alpha).
    const Eigen::VectorXd& weights() const { return weights_; }
    /// d weights / d log(ell), including the dependence of C on ell.
    Eigen::VectorXd weights_dlog_length() const;

    /// Dense k(rows, cols). Entry (i, j) is computed identically to entry
    /// (j, i) of matrix(cols, rows), so the transpose relation holds exactly.
    Eigen::MatrixXd matrix(std::span<const NodeId> rows, std::span<const NodeId> cols) const;
    /// Same expansion with arbitrary spectral weights (used for derivatives).
    Eigen::MatrixXd matrix_with_weights(std::span<const NodeId> rows, std::span<const NodeId> cols,
                                        const Eigen::VectorXd& weights) const;
    /// k(x, x) for each node.
    Eigen::VectorXd diagonal(std::span<const NodeId> nodes) const;
    /// k(x, x) for every mesh node.
    Eigen::VectorXd diagonal_all() const;

private:
    const EigenBasis* basis_;
    KernelParams params_;
    double alpha_;
    double normalization_;
    Eigen::VectorXd spectral_;   // (1/ell^2 + lambda_i)^(-alpha)
    Eigen::VectorXd mode_means_; // (1/n) sum_x psi_i(x)^2
    Eigen::VectorXd weights_;
};

Eigen::MatrixXd kernel_matrix(const EigenBasis& basis, std::span<const NodeId> rows, std::span<const NodeId> cols,
                              const KernelParams& params);

/// All node ids 0..n-1.
std::vector<NodeId> all_nodes(std::size_t n);

}  // namespace easbo
