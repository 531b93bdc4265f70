#include <algorithm>
#include <cmath>
#include <map>

#include <Eigen/Dense>

#include "easbo/errors.hpp"
#include "easbo/mesh.hpp"

namespace easbo {

namespace {

struct RawSurface {
    std::vector<Vec3> vertices;
    std::vector<Simplex> triangles;
};

// Unit icosphere with each icosahedron face split into frequency^2 triangles.
// Vertices are deduplicated through an exact key on (corner, weight) pairs so
// the result is deterministic and watertight.
RawSurface unit_icosphere(int frequency) {
    const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
    const std::array<Vec3, 12> corners = {
        Vec3(-1, phi, 0), Vec3(1, phi, 0), Vec3(-1, -phi, 0), Vec3(1, -phi, 0),
        Vec3(0, -1, phi), Vec3(0, 1, phi), Vec3(0, -1, -phi), Vec3(0, 1, -phi),
        Vec3(phi, 0, -1), Vec3(phi, 0, 1), Vec3(-phi, 0, -1), Vec3(-phi, 0, 1)};
    const std::array<std::array<int, 3>, 20> faces = {{
        {0, 11, 5}, {0, 5, 1}, {0, 1, 7}, {0, 7, 10}, {0, 10, 11},
        {1, 5, 9}, {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
        {3, 9, 4}, {3, 4, 2}, {3, 2, 6}, {3, 6, 8}, {3, 8, 9},
        {4, 9, 5}, {2, 4, 11}, {6, 2, 10}, {8, 6, 7}, {9, 8, 1}}};

    const int k = frequency;
    RawSurface out;
    std::map<std::array<int, 6>, std::uint32_t> index;

    auto vertex_id = [&](const std::array<int, 3>& face, int wa, int wb, int wc) {
        std::array<std::pair<int, int>, 3> parts = {
            std::pair{face[0], wa}, std::pair{face[1], wb}, std::pair{face[2], wc}};
        std::sort(parts.begin(), parts.end());
        std::array<int, 6> key{};
        int slot = 0;
        for (const auto& [c, w] : parts) {
            if (w == 0) continue;
            key[slot++] = c + 1;
            key[slot++] = w;
        }
        auto it = index.find(key);
        if (it != index.end()) return it->second;
        Vec3 p = (wa * corners[face[0]] + wb * corners[face[1]] + wc * corners[face[2]]) /
                 static_cast<double>(k);
        const auto id = static_cast<std::uint32_t>(out.vertices.size());
        out.vertices.push_back(p.normalized());
        index.emplace(key, id);
        return id;
    };

    for (const auto& f : faces) {
        // Lattice point (i, j): weight i on corner b, j on corner c.
        std::vector<std::vector<std::uint32_t>> ids(k + 1);
        for (int i = 0; i <= k; ++i) {
            ids[i].resize(k + 1 - i);
            for (int j = 0; j <= k - i; ++j) ids[i][j] = vertex_id(f, k - i - j, i, j);
        }
        for (int i = 0; i < k; ++i) {
            for (int j = 0; j < k - i; ++j) {
                out.triangles.push_back({ids[i][j], ids[i + 1][j], ids[i][j + 1], 0});
                if (j + 1 <= k - i - 1) {
                    out.triangles.push_back({ids[i + 1][j], ids[i + 1][j + 1], ids[i][j + 1], 0});
                }
            }
        }
    }
    // Outward orientation.
    for (auto& t : out.triangles) {
        const Vec3& a = out.vertices[t[0]];
        const Vec3& b = out.vertices[t[1]];
        const Vec3& c = out.vertices[t[2]];
        if ((b - a).cross(c - a).dot(a + b + c) < 0) std::swap(t[1], t[2]);
    }
    return out;
}

Vec3 principal_axis(const std::vector<Vec3>& vertices) {
    Vec3 c = Vec3::Zero();
    for (const auto& v : vertices) c += v;
    c /= static_cast<double>(vertices.size());
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (const auto& v : vertices) cov += (v - c) * (v - c).transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(cov);
    Vec3 axis = es.eigenvectors().col(2);
    Eigen::Index imax = 0;
    axis.cwiseAbs().maxCoeff(&imax);
    if (axis[imax] < 0) axis = -axis;
    return axis;
}

Vec3 any_tangent(const Vec3& n) {
    Eigen::Index imin = 0;
    n.cwiseAbs().minCoeff(&imin);
    return n.cross(Vec3::Unit(imin)).normalized();
}

Vec3 project_to_plane(const Vec3& dir, const Vec3& n) {
    Vec3 f = dir - dir.dot(n) * n;
    if (f.norm() < 1e-8 * std::max(1.0, dir.norm())) return any_tangent(n);
    f.normalize();
    // One more pass to push the out-of-plane residual to round-off.
    f -= f.dot(n) * n;
    return f.normalized();
}

}  // namespace

std::vector<Vec3> make_fibers(const std::vector<Vec3>& vertices,
                              const std::vector<Simplex>& simplices, int dimension,
                              FiberRule rule, const Vec3& direction) {
    std::vector<Vec3> fibers(simplices.size());
    Vec3 axis = Vec3::UnitX();
    Vec3 center = Vec3::Zero();
    if (rule == FiberRule::azimuthal) {
        axis = principal_axis(vertices);
        for (const auto& v : vertices) center += v;
        center /= static_cast<double>(vertices.size());
    } else if (!(direction.norm() > 0)) {
        throw PreconditionError("fixed fiber direction must be nonzero");
    }
    const int k = dimension + 1;
    for (std::size_t e = 0; e < simplices.size(); ++e) {
        const auto& s = simplices[e];
        Vec3 c = Vec3::Zero();
        for (int j = 0; j < k; ++j) c += vertices[s[j]];
        c /= static_cast<double>(k);

        Vec3 dir;
        if (rule == FiberRule::azimuthal) {
            dir = axis.cross(c - center);
            if (dir.norm() < 1e-12) dir = any_tangent(axis);
        } else {
            dir = direction;
        }
        if (dimension == 2) {
            const Vec3 n = (vertices[s[1]] - vertices[s[0]]).cross(vertices[s[2]] - vertices[s[0]]).normalized();
            fibers[e] = project_to_plane(dir, n);
        } else {
            fibers[e] = dir.normalized();
        }
    }
    return fibers;
}

SimplicialMesh generate_synthetic_geometry(const GeometryParams& params) {
    if (params.subdivision < 0) throw PreconditionError("subdivision level must be >= 0");
    if (params.frequency && *params.frequency < 1) throw PreconditionError("frequency must be >= 1");
    if (!(params.radii.minCoeff() > 0)) throw PreconditionError("radii must be positive");

    const int frequency = params.frequency ? *params.frequency : (1 << params.subdivision);
    RawSurface s = unit_icosphere(frequency);
    const Vec3 scale = params.kind == GeometryKind::icosphere
                           ? Vec3::Constant(params.radii.x())
                           : params.radii;
    for (auto& v : s.vertices) v = v.cwiseProduct(scale);
    auto fibers = make_fibers(s.vertices, s.triangles, 2, params.fiber_rule, params.fiber_direction);
    return SimplicialMesh(std::move(s.vertices), std::move(s.triangles), 2, std::move(fibers));
}

SimplicialMesh generate_planar_sheet(double width, double height, int nx, int ny,
                                     SheetPattern pattern, FiberRule rule, const Vec3& direction) {
    if (nx < 1 || ny < 1 || !(width > 0) || !(height > 0)) {
        throw PreconditionError("sheet needs positive size and at least one cell per side");
    }
    std::vector<Vec3> vertices;
    vertices.reserve(static_cast<std::size_t>((nx + 1) * (ny + 1)));
    for (int j = 0; j <= ny; ++j)
        for (int i = 0; i <= nx; ++i)
            vertices.emplace_back(width * i / nx, height * j / ny, 0.0);
    auto id = [nx](int i, int j) { return static_cast<std::uint32_t>(j * (nx + 1) + i); };
    std::vector<Simplex> tris;
    tris.reserve(static_cast<std::size_t>(2 * nx * ny));
    for (int j = 0; j < ny; ++j) {
        for (int i = 0; i < nx; ++i) {
            const auto a = id(i, j), b = id(i + 1, j), c = id(i + 1, j + 1), d = id(i, j + 1);
            const bool flip = pattern == SheetPattern::crisscross && ((i + j) % 2 == 1);
            if (!flip) {
                tris.push_back({a, b, c, 0});
                tris.push_back({a, c, d, 0});
            } else {
                tris.push_back({a, b, d, 0});
                tris.push_back({b, c, d, 0});
            }
        }
    }
    auto fibers = make_fibers(vertices, tris, 2, rule, direction);
    return SimplicialMesh(std::move(vertices), std::move(tris), 2, std::move(fibers));
}

}  // namespace easbo
