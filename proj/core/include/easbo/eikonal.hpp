#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "easbo/mesh.hpp"

namespace easbo {

/// Per-element conduction velocity tensors D = v_t^2 I + (v_l^2 - v_t^2) l (x) l
/// (mm^2/ms^2) and their inverses, the metric used by the local solver.
struct ConductionTensorField {
    double v_long = 0.0;
    double v_trans = 0.0;
    std::vector<Eigen::Matrix3d> tensors;
    std::vector<Eigen::Matrix3d> metrics;
};

/// Requires v_long >= v_trans > 0 and a mesh carrying fibers.
ConductionTensorField build_conduction_tensor(const SimplicialMesh& mesh, double v_long, double v_trans);

/// Isotropic field with speed `v` everywhere; fibers are not needed.
ConductionTensorField isotropic_conduction(const SimplicialMesh& mesh, double v);

/// CSV "element,d00,d01,d02,d11,d12,d22" (upper triangle of each D).
void write_conduction_tensors_csv(const ConductionTensorField& field, const std::filesystem::path& path,
                                  const std::string& metadata = {});

/// Arrival times tau (ms) of a front started at `source`.
struct ActivationMap {
    std::vector<double> times;
    NodeId source;

    double max_time() const;
};

struct EikonalOptions {
    double tolerance = 1e-6;   ///< ms; FIM convergence threshold per node
    std::size_t max_updates_per_node = 2000;
    /// Nodes within this many source edge lengths (mean length of the edges
    /// at the source) are seeded with the exact travel time for the averaged
    /// source metric instead of being reached through local updates, which
    /// removes the first-order point-source error. 0 disables seeding.
    double source_ball_edges = 0.0;
};

/// Fast Iterative Method on the simplicial mesh with per-simplex local
/// solves. Node values only ever decrease during the iteration.
ActivationMap solve_eikonal(const SimplicialMesh& mesh, const ConductionTensorField& tensors, NodeId source,
                            const EikonalOptions& options = {});

// ---------------------------------------------------------------------------
// Local solvers. `metric` is D^{-1}; the travel time along a vector e inside
// the element is sqrt(e^T metric e).

/// Travel time from a single known vertex.
double edge_update(double t_a, const Vec3& x_a, const Vec3& x_target, const Eigen::Matrix3d& metric);

/// Minimum arrival at x_c over entry points on edge [x_a, x_b]. Either time
/// may be +inf, in which case the other edge alone is used.
double triangle_update(double t_a, double t_b, const Vec3& x_a, const Vec3& x_b, const Vec3& x_c,
                       const Eigen::Matrix3d& metric);

/// Minimum arrival at x_d over entry points on face [x_a, x_b, x_c].
double tetra_update(double t_a, double t_b, double t_c, const Vec3& x_a, const Vec3& x_b, const Vec3& x_c,
                    const Vec3& x_d, const Eigen::Matrix3d& metric);

}  // namespace easbo
