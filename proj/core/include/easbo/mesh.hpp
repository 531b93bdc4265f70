#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace easbo {

using Vec3 = Eigen::Vector3d;

/// Index of a mesh vertex. EAS candidates live on mesh nodes.
struct NodeId {
    std::uint32_t index = 0;

    constexpr NodeId() = default;
    constexpr explicit NodeId(std::uint32_t i) : index(i) {}
    constexpr explicit NodeId(std::size_t i) : index(static_cast<std::uint32_t>(i)) {}
    constexpr explicit NodeId(int i) : index(static_cast<std::uint32_t>(i)) {}

    friend constexpr auto operator<=>(NodeId, NodeId) = default;
};

/// Vertex indices of one simplex. Triangles use the first three slots.
using Simplex = std::array<std::uint32_t, 4>;

/// Immutable simplicial mesh (triangulated surface or tetrahedral volume)
/// embedded in 3D, with an optional per-element unit fiber direction.
///
/// The constructor validates: indices in range, positive element measure,
/// a single connected component, and (when present) unit fibers that lie in
/// the plane of their triangle for surface meshes.
class SimplicialMesh {
public:
    SimplicialMesh(std::vector<Vec3> vertices, std::vector<Simplex> simplices, int dimension,
                   std::vector<Vec3> fibers = {});

    int dimension() const noexcept { return dimension_; }
    int vertices_per_simplex() const noexcept { return dimension_ + 1; }
    std::size_t num_vertices() const noexcept { return vertices_.size(); }
    std::size_t num_simplices() const noexcept { return simplices_.size(); }

    const Vec3& vertex(std::size_t i) const { return vertices_[i]; }
    const Vec3& vertex(NodeId n) const { return vertices_[n.index]; }
    const std::vector<Vec3>& vertices() const noexcept { return vertices_; }
    const std::vector<Simplex>& simplices() const noexcept { return simplices_; }

    /// Vertex indices of element `e` (length dimension()+1).
    std::span<const std::uint32_t> simplex(std::size_t e) const {
        return {simplices_[e].data(), static_cast<std::size_t>(dimension_ + 1)};
    }

    bool has_fibers() const noexcept { return !fibers_.empty(); }
    const std::vector<Vec3>& fibers() const noexcept { return fibers_; }
    const Vec3& fiber(std::size_t e) const { return fibers_[e]; }

    /// Area (d=2) or volume (d=3) of element `e`.
    double element_measure(std::size_t e) const { return measures_[e]; }
    double total_measure() const noexcept;
    Vec3 element_centroid(std::size_t e) const;
    /// Unit normal of a surface triangle (right-hand rule on vertex order).
    Vec3 element_normal(std::size_t e) const;

    /// Elements incident to vertex `v`.
    std::span<const std::uint32_t> vertex_elements(std::size_t v) const {
        return {vertex_elements_.data() + vertex_elements_offsets_[v],
                vertex_elements_offsets_[v + 1] - vertex_elements_offsets_[v]};
    }
    /// Vertices sharing an element with `v`, ascending, excluding `v`.
    std::span<const std::uint32_t> vertex_neighbors(std::size_t v) const {
        return {neighbors_.data() + neighbor_offsets_[v],
                neighbor_offsets_[v + 1] - neighbor_offsets_[v]};
    }

    /// Unique undirected edges (a < b), sorted.
    std::vector<std::array<std::uint32_t, 2>> edges() const;
    double mean_edge_length() const;
    /// Largest Euclidean distance between two vertices.
    double diameter() const;
    Vec3 bounding_box_min() const;
    Vec3 bounding_box_max() const;
    Vec3 centroid() const;

    /// Returns a copy carrying the given fibers (validated).
    SimplicialMesh with_fibers(std::vector<Vec3> fibers) const;

private:
    void validate_and_index();
    void validate_fibers() const;

    std::vector<Vec3> vertices_;
    std::vector<Simplex> simplices_;
    std::vector<Vec3> fibers_;
    int dimension_;
    std::vector<double> measures_;
    std::vector<std::uint32_t> vertex_elements_;
    std::vector<std::size_t> vertex_elements_offsets_;
    std::vector<std::uint32_t> neighbors_;
    std::vector<std::size_t> neighbor_offsets_;
};

// ---------------------------------------------------------------------------
// File I/O

enum class MeshFormat { off, vtk_legacy_ascii };

/// Guesses the format from the file extension (.off / .vtk).
MeshFormat mesh_format_from_path(const std::filesystem::path& path);

/// Reads an OFF or legacy ASCII VTK POLYDATA/UNSTRUCTURED_GRID file.
///
/// Fibers come from, in order: `fiber_sidecar` (one 3-vector per line),
/// VTK CELL_DATA VECTORS, or the default azimuthal rule. Supplied fibers are
/// projected onto their triangle plane and normalized.
SimplicialMesh load_mesh(const std::filesystem::path& path, MeshFormat format,
                         const std::optional<std::filesystem::path>& fiber_sidecar = std::nullopt);

/// Writes the mesh; VTK output includes fibers as CELL_DATA when present.
/// Coordinates are written with round-trip precision.
/// `title` goes into the VTK title line or an OFF comment (single line).
void save_mesh(const SimplicialMesh& mesh, const std::filesystem::path& path, MeshFormat format,
               const std::string& title = {});

void save_fibers(const SimplicialMesh& mesh, const std::filesystem::path& path);
std::vector<Vec3> load_fibers(const std::filesystem::path& path);

/// VTK POLYDATA with one scalar POINT_DATA field, e.g. an activation map.
void save_vtk_point_field(const SimplicialMesh& mesh, std::span<const double> values,
                          const std::string& name, const std::filesystem::path& path,
                          const std::string& title = {});

// ---------------------------------------------------------------------------
// Synthetic geometry

enum class GeometryKind { icosphere, ellipsoid_shell };
enum class FiberRule { azimuthal, fixed_direction };

struct GeometryParams {
    GeometryKind kind = GeometryKind::icosphere;
    /// Sphere radius uses radii.x(); the ellipsoid uses all three semi-axes (mm).
    Vec3 radii{1.0, 1.0, 1.0};
    /// Recursive 4:1 subdivision level; 20*4^level triangles.
    int subdivision = 2;
    /// Overrides `subdivision` when set: each icosahedron face is split into
    /// frequency^2 triangles (10*f^2+2 vertices).
    std::optional<int> frequency;
    FiberRule fiber_rule = FiberRule::azimuthal;
    Vec3 fiber_direction{1.0, 0.0, 0.0};
};

SimplicialMesh generate_synthetic_geometry(const GeometryParams& params);

enum class SheetPattern { regular, crisscross };

/// Flat rectangular sheet [0,width]x[0,height] in the z=0 plane with
/// (nx+1)x(ny+1) grid nodes. `crisscross` alternates the diagonal direction.
SimplicialMesh generate_planar_sheet(double width, double height, int nx, int ny,
                                     SheetPattern pattern = SheetPattern::crisscross,
                                     FiberRule rule = FiberRule::fixed_direction,
                                     const Vec3& direction = Vec3::UnitX());

/// Per-element fibers for `rule`, projected to each triangle's tangent plane.
std::vector<Vec3> make_fibers(const std::vector<Vec3>& vertices,
                              const std::vector<Simplex>& simplices, int dimension,
                              FiberRule rule, const Vec3& direction = Vec3::UnitX());

// ---------------------------------------------------------------------------
// Queries and transforms

/// Static nearest-vertex search structure (k-d tree). Ties resolve to the
/// lowest vertex index.
class NodeLocator {
public:
    explicit NodeLocator(const std::vector<Vec3>& points);
    NodeId nearest(const Vec3& query) const;

private:
    struct Node {
        std::uint32_t point;
        std::int32_t left = -1;
        std::int32_t right = -1;
        int axis = 0;
    };
    std::int32_t build(std::vector<std::uint32_t>& ids, std::size_t lo, std::size_t hi, int depth);
    void search(std::int32_t node, const Vec3& q, double& best_d2, std::uint32_t& best) const;

    const std::vector<Vec3>* points_;
    std::vector<Node> nodes_;
    std::int32_t root_ = -1;
};

NodeId nearest_node(const SimplicialMesh& mesh, const Vec3& point);

/// Decimates a triangulated surface by half-edge collapses until the mean
/// edge length reaches `target_edge_factor` times the original, followed by
/// quality-improving edge flips. Surviving vertices keep their original
/// positions; fibers are taken from the nearest original element.
SimplicialMesh coarsen_mesh(const SimplicialMesh& mesh, double target_edge_factor);

}  // namespace easbo
