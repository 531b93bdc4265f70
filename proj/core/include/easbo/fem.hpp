#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "easbo/mesh.hpp"

namespace easbo {

/// Symmetric sparse matrix over mesh nodes (both triangles stored).
using SparseSymMatrix = Eigen::SparseMatrix<double>;

/// Measure and P1 shape-function gradients of one element. Gradients are
/// tangent to the element (surface gradients for triangles in 3D).
struct ElementGradients {
    double measure = 0.0;
    std::array<Vec3, 4> grad{};
};

ElementGradients element_gradients(const SimplicialMesh& mesh, std::size_t e);

/// A_ij = sum_e int grad N_i . grad N_j.
SparseSymMatrix assemble_stiffness(const SimplicialMesh& mesh);

/// A_ij = sum_e int (T_e grad N_i) . grad N_j with a per-element symmetric tensor.
SparseSymMatrix assemble_weighted_stiffness(const SimplicialMesh& mesh,
                                            std::span<const Eigen::Matrix3d> tensors);

enum class MassLumping { consistent, lumped };

SparseSymMatrix assemble_mass(const SimplicialMesh& mesh, MassLumping lumping = MassLumping::consistent);

/// Truncated generalized eigendecomposition A psi = lambda M psi.
///
/// Eigenvalues ascend; eigenvectors are M-orthonormal columns, each signed so
/// that its largest-magnitude entry is positive.
struct EigenBasis {
    Eigen::VectorXd eigenvalues;
    Eigen::MatrixXd eigenvectors;  // n x count
    int manifold_dimension = 2;

    std::size_t num_nodes() const { return static_cast<std::size_t>(eigenvectors.rows()); }
    std::size_t count() const { return static_cast<std::size_t>(eigenvalues.size()); }

    /// Keeps the first `k` pairs.
    EigenBasis truncated(std::size_t k) const;
};

enum class EigenMethod {
    automatic,  ///< dense for small problems, shift-invert Lanczos otherwise
    dense,
    lanczos,
};

struct EigenOptions {
    EigenMethod method = EigenMethod::automatic;
    double residual_tolerance = 1e-6;
    int max_refinements = 20;
};

/// min(256, n/4), at least 1.
std::size_t default_eigen_count(std::size_t num_nodes);

/// Throws ComputeError carrying the worst residual if any retained pair misses
/// `residual_tolerance` on ||A psi - lambda M psi|| / ||M psi||.
EigenBasis compute_eigenbasis(const SparseSymMatrix& stiffness, const SparseSymMatrix& mass,
                              std::size_t n_eig, const EigenOptions& options = {});

/// Residual norms ||A psi_i - lambda_i M psi_i|| / ||M psi_i|| per pair.
Eigen::VectorXd eigen_residuals(const SparseSymMatrix& stiffness, const SparseSymMatrix& mass,
                                const EigenBasis& basis);

/// ASCII table: "n count dim", the eigenvalues, then the n x count matrix
/// row-major. Leading '#' lines are comments.
void save_eigenbasis(const EigenBasis& basis, const std::filesystem::path& path, const std::string& comment = {});
EigenBasis load_eigenbasis(const std::filesystem::path& path);

}  // namespace easbo

namespace easbo {

/// Assembles A and M on the mesh and returns the n_eig smallest
/// Laplace-Beltrami eigenpairs (natural boundary conditions on open meshes).
EigenBasis laplace_beltrami_basis(const SimplicialMesh& mesh, std::size_t n_eig,
                                  const EigenOptions& options = {});

}  // namespace easbo
