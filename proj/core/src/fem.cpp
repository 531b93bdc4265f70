#include "easbo/fem.hpp"

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include "easbo/errors.hpp"

namespace easbo {

ElementGradients element_gradients(const SimplicialMesh& mesh, std::size_t e) {
    const auto s = mesh.simplex(e);
    const int d = mesh.dimension();
    ElementGradients out;
    out.measure = mesh.element_measure(e);
    if (!(out.measure > 0)) throw ComputeError("degenerate element " + std::to_string(e));

    // Edge matrix E = [x1-x0, ..., xd-x0]; gradients of N_1..N_d are the
    // columns of E (E^T E)^{-1}, and grad N_0 = -sum of the others.
    Eigen::Matrix<double, 3, Eigen::Dynamic, 0, 3, 3> E(3, d);
    for (int j = 0; j < d; ++j) E.col(j) = mesh.vertex(s[j + 1]) - mesh.vertex(s[0]);
    const Eigen::MatrixXd gram = E.transpose() * E;
    const Eigen::MatrixXd G = E * gram.inverse();
    Vec3 sum = Vec3::Zero();
    for (int j = 0; j < d; ++j) {
        out.grad[j + 1] = G.col(j);
        sum += out.grad[j + 1];
    }
    out.grad[0] = -sum;
    return out;
}

namespace {

template <typename TensorAt>
SparseSymMatrix assemble_gradient_form(const SimplicialMesh& mesh, TensorAt tensor_at) {
    const int k = mesh.vertices_per_simplex();
    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(mesh.num_simplices() * static_cast<std::size_t>(k * k));
    for (std::size_t e = 0; e < mesh.num_simplices(); ++e) {
        const auto g = element_gradients(mesh, e);
        const auto s = mesh.simplex(e);
        const Eigen::Matrix3d T = tensor_at(e);
        for (int i = 0; i < k; ++i) {
            const Vec3 tg = T * g.grad[i];
            for (int j = 0; j < k; ++j) {
                triplets.emplace_back(s[i], s[j], g.measure * tg.dot(g.grad[j]));
            }
        }
    }
    const auto n = static_cast<Eigen::Index>(mesh.num_vertices());
    SparseSymMatrix A(n, n);
    A.setFromTriplets(triplets.begin(), triplets.end());
    return A;
}

}  // namespace

SparseSymMatrix assemble_stiffness(const SimplicialMesh& mesh) {
    return assemble_gradient_form(mesh, [](std::size_t) { return Eigen::Matrix3d::Identity(); });
}

SparseSymMatrix assemble_weighted_stiffness(const SimplicialMesh& mesh,
                                            std::span<const Eigen::Matrix3d> tensors) {
    if (tensors.size() != mesh.num_simplices()) {
        throw PreconditionError("tensor count does not match element count");
    }
    return assemble_gradient_form(mesh, [&](std::size_t e) { return tensors[e]; });
}

SparseSymMatrix assemble_mass(const SimplicialMesh& mesh, MassLumping lumping) {
    const int k = mesh.vertices_per_simplex();
    // Exact P1 integrals: int N_i N_j = |e| (1 + delta_ij) / ((d+1)(d+2)).
    const double denom = static_cast<double>(k * (k + 1));
    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(mesh.num_simplices() * static_cast<std::size_t>(k * k));
    for (std::size_t e = 0; e < mesh.num_simplices(); ++e) {
        const double m = mesh.element_measure(e);
        if (!(m > 0)) throw ComputeError("degenerate element " + std::to_string(e));
        const auto s = mesh.simplex(e);
        for (int i = 0; i < k; ++i) {
            if (lumping == MassLumping::lumped) {
                triplets.emplace_back(s[i], s[i], m / k);
                continue;
            }
            for (int j = 0; j < k; ++j) {
                triplets.emplace_back(s[i], s[j], m * (i == j ? 2.0 : 1.0) / denom);
            }
        }
    }
    const auto n = static_cast<Eigen::Index>(mesh.num_vertices());
    SparseSymMatrix M(n, n);
    M.setFromTriplets(triplets.begin(), triplets.end());
    return M;
}

}  // namespace easbo

namespace easbo {

EigenBasis laplace_beltrami_basis(const SimplicialMesh& mesh, std::size_t n_eig, const EigenOptions& options) {
    auto basis = compute_eigenbasis(assemble_stiffness(mesh), assemble_mass(mesh), n_eig, options);
    basis.manifold_dimension = mesh.dimension();
    return basis;
}

}  // namespace easbo
