#include "easbo/kernel.hpp"

#include <cmath>

#include "easbo/errors.hpp"

namespace easbo {

SpectralKernel::SpectralKernel(const EigenBasis& basis, const KernelParams& params)
    : basis_(&basis), params_(params) {
    if (basis.count() == 0) throw PreconditionError("kernel needs a non-empty eigenbasis");
    if (!(params.amplitude > 0) || !(params.length_scale > 0) || !(params.smoothness > 0)) {
        throw PreconditionError("kernel parameters must be positive");
    }
    alpha_ = params.smoothness + 0.5 * basis.manifold_dimension;
    const double kappa2 = 1.0 / (params.length_scale * params.length_scale);
    const auto& lambda = basis.eigenvalues;
    spectral_.resize(lambda.size());
    // Scale by the first term so large alpha does not underflow.
    const double ref = std::log(kappa2 + std::max(0.0, lambda[0]));
    for (Eigen::Index i = 0; i < lambda.size(); ++i) {
        spectral_[i] = std::exp(-alpha_ * (std::log(kappa2 + std::max(0.0, lambda[i])) - ref));
    }
    mode_means_ = basis.eigenvectors.array().square().colwise().mean().transpose();
    normalization_ = spectral_.dot(mode_means_);
    weights_ = (params.amplitude * params.amplitude / normalization_) * spectral_;
}

Eigen::VectorXd SpectralKernel::weights_dlog_length() const {
    const double ell2 = params_.length_scale * params_.length_scale;
    const auto& lambda = basis_->eigenvalues;
    Eigen::VectorXd dlog(lambda.size());
    for (Eigen::Index i = 0; i < lambda.size(); ++i) {
        dlog[i] = 2.0 * alpha_ / (1.0 + ell2 * std::max(0.0, lambda[i]));
    }
    const double dlog_c = spectral_.cwiseProduct(mode_means_).dot(dlog) / normalization_;
    return weights_.cwiseProduct((dlog.array() - dlog_c).matrix());
}

Eigen::MatrixXd SpectralKernel::matrix_with_weights(std::span<const NodeId> rows, std::span<const NodeId> cols,
                                                    const Eigen::VectorXd& weights) const {
    const auto& psi = basis_->eigenvectors;
    const auto m = psi.cols();
    const auto n = static_cast<std::size_t>(psi.rows());
    for (auto r : rows)
        if (r.index >= n) throw PreconditionError("node id outside the eigenbasis");
    for (auto c : cols)
        if (c.index >= n) throw PreconditionError("node id outside the eigenbasis");

    // sqrt-weighted rows, then plain sequential dot products: entry (i, j)
    // multiplies the same factor pairs in the same order as (j, i).
    const Eigen::VectorXd sign = weights.unaryExpr([](double w) { return w < 0 ? -1.0 : 1.0; });
    using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    RowMat a(static_cast<Eigen::Index>(rows.size()), m), b(static_cast<Eigen::Index>(cols.size()), m);
    const Eigen::VectorXd sa = weights.cwiseAbs().cwiseSqrt();
    for (std::size_t i = 0; i < rows.size(); ++i)
        a.row(static_cast<Eigen::Index>(i)) = psi.row(rows[i].index).cwiseProduct(sa.transpose());
    for (std::size_t j = 0; j < cols.size(); ++j)
        b.row(static_cast<Eigen::Index>(j)) = psi.row(cols[j].index).cwiseProduct(sa.transpose());

    Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
        const double* ai = a.row(i).data();
        for (Eigen::Index j = 0; j < out.cols(); ++j) {
            const double* bj = b.row(j).data();
            double s = 0.0;
            for (Eigen::Index k = 0; k < m; ++k) s += sign[k] * (ai[k] * bj[k]);
            out(i, j) = s;
        }
    }
    return out;
}

Eigen::MatrixXd SpectralKernel::matrix(std::span<const NodeId> rows, std::span<const NodeId> cols) const {
    return matrix_with_weights(rows, cols, weights_);
}

Eigen::VectorXd SpectralKernel::diagonal(std::span<const NodeId> nodes) const {
    const auto& psi = basis_->eigenvectors;
    Eigen::VectorXd out(static_cast<Eigen::Index>(nodes.size()));
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        if (nodes[i].index >= psi.rows()) throw PreconditionError("node id outside the eigenbasis");
        out[static_cast<Eigen::Index>(i)] = psi.row(nodes[i].index).array().square().matrix().dot(weights_);
    }
    return out;
}

Eigen::VectorXd SpectralKernel::diagonal_all() const {
    return basis_->eigenvectors.array().square().matrix() * weights_;
}

Eigen::MatrixXd kernel_matrix(const EigenBasis& basis, std::span<const NodeId> rows, std::span<const NodeId> cols,
                              const KernelParams& params) {
    return SpectralKernel(basis, params).matrix(rows, cols);
}

std::vector<NodeId> all_nodes(std::size_t n) {
    std::vector<NodeId> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = NodeId{i};
    return out;
}

}  // namespace easbo
