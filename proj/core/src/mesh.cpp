#include "easbo/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>
#include <string>

#include <Eigen/Dense>

#include "easbo/errors.hpp"

namespace easbo {

namespace {

double simplex_measure(const std::vector<Vec3>& x, std::span<const std::uint32_t> s) {
    if (s.size() == 3) {
        return 0.5 * (x[s[1]] - x[s[0]]).cross(x[s[2]] - x[s[0]]).norm();
    }
    return std::abs((x[s[1]] - x[s[0]]).dot((x[s[2]] - x[s[0]]).cross(x[s[3]] - x[s[0]]))) / 6.0;
}

}  // namespace

SimplicialMesh::SimplicialMesh(std::vector<Vec3> vertices, std::vector<Simplex> simplices,
                               int dimension, std::vector<Vec3> fibers)
    : vertices_(std::move(vertices)),
      simplices_(std::move(simplices)),
      fibers_(std::move(fibers)),
      dimension_(dimension) {
    validate_and_index();
    validate_fibers();
}

void SimplicialMesh::validate_and_index() {
    if (dimension_ != 2 && dimension_ != 3) {
        throw ValidationError("mesh dimension must be 2 or 3, got " + std::to_string(dimension_));
    }
    if (vertices_.empty() || simplices_.empty()) {
        throw ValidationError("mesh has no vertices or no elements");
    }
    const std::size_t n = vertices_.size();
    const int k = dimension_ + 1;
    for (std::size_t e = 0; e < simplices_.size(); ++e) {
        for (int j = 0; j < k; ++j) {
            if (simplices_[e][j] >= n) {
                throw ValidationError("element " + std::to_string(e) + " references vertex " +
                                      std::to_string(simplices_[e][j]) + " of " +
                                      std::to_string(n));
            }
            for (int i = 0; i < j; ++i) {
                if (simplices_[e][i] == simplices_[e][j]) {
                    throw ValidationError("element " + std::to_string(e) +
                                          " repeats a vertex index");
                }
            }
        }
        if (k == 3) simplices_[e][3] = 0;
    }

    // Scale for the degeneracy threshold.
    double h = 0.0;
    for (const auto& s : simplices_) h += (vertices_[s[1]] - vertices_[s[0]]).norm();
    h /= static_cast<double>(simplices_.size());

    measures_.resize(simplices_.size());
    for (std::size_t e = 0; e < simplices_.size(); ++e) {
        measures_[e] = simplex_measure(vertices_, simplex(e));
        if (!(measures_[e] > 1e-12 * std::pow(h, dimension_))) {
            throw ValidationError("degenerate element " + std::to_string(e) +
                                  " (measure " + std::to_string(measures_[e]) + ")");
        }
    }

    // vertex -> elements (CSR)
    vertex_elements_offsets_.assign(n + 1, 0);
    for (const auto& s : simplices_)
        for (int j = 0; j < k; ++j) ++vertex_elements_offsets_[s[j] + 1];
    std::partial_sum(vertex_elements_offsets_.begin(), vertex_elements_offsets_.end(),
                     vertex_elements_offsets_.begin());
    vertex_elements_.resize(vertex_elements_offsets_[n]);
    {
        std::vector<std::size_t> fill(vertex_elements_offsets_.begin(),
                                      vertex_elements_offsets_.end() - 1);
        for (std::size_t e = 0; e < simplices_.size(); ++e)
            for (int j = 0; j < k; ++j)
                vertex_elements_[fill[simplices_[e][j]]++] = static_cast<std::uint32_t>(e);
    }

    // vertex -> neighbors (CSR)
    neighbor_offsets_.assign(n + 1, 0);
    std::vector<std::vector<std::uint32_t>> nb(n);
    for (std::size_t v = 0; v < n; ++v) {
        auto& list = nb[v];
        for (auto e : vertex_elements(v))
            for (int j = 0; j < k; ++j)
                if (simplices_[e][j] != v) list.push_back(simplices_[e][j]);
        std::sort(list.begin(), list.end());
        list.erase(std::unique(list.begin(), list.end()), list.end());
        neighbor_offsets_[v + 1] = neighbor_offsets_[v] + list.size();
    }
    neighbors_.reserve(neighbor_offsets_[n]);
    for (auto& list : nb) neighbors_.insert(neighbors_.end(), list.begin(), list.end());

    // Single connected component.
    std::vector<char> seen(n, 0);
    std::vector<std::uint32_t> stack{0};
    seen[0] = 1;
    std::size_t count = 1;
    while (!stack.empty()) {
        auto v = stack.back();
        stack.pop_back();
        for (auto w : vertex_neighbors(v)) {
            if (!seen[w]) {
                seen[w] = 1;
                ++count;
                stack.push_back(w);
            }
        }
    }
    if (count != n) {
        throw ValidationError("mesh is not connected (" + std::to_string(count) + " of " +
                              std::to_string(n) + " vertices reachable from vertex 0)");
    }
}

void SimplicialMesh::validate_fibers() const {
    if (fibers_.empty()) return;
    if (fibers_.size() != simplices_.size()) {
        throw ValidationError("fiber count " + std::to_string(fibers_.size()) +
                              " does not match element count " +
                              std::to_string(simplices_.size()));
    }
    for (std::size_t e = 0; e < fibers_.size(); ++e) {
        const double norm = fibers_[e].norm();
        if (!std::isfinite(norm) || std::abs(norm - 1.0) > 1e-9) {
            throw ValidationError("fiber of element " + std::to_string(e) + " is not unit");
        }
        if (dimension_ == 2) {
            const double s = std::abs(fibers_[e].dot(element_normal(e)));
            if (std::asin(std::min(1.0, s)) > 1e-6) {
                throw ValidationError("fiber of element " + std::to_string(e) +
                                      " leaves the triangle plane");
            }
        }
    }
}

SimplicialMesh SimplicialMesh::with_fibers(std::vector<Vec3> fibers) const {
    return SimplicialMesh(vertices_, simplices_, dimension_, std::move(fibers));
}

double SimplicialMesh::total_measure() const noexcept {
    return std::accumulate(measures_.begin(), measures_.end(), 0.0);
}

Vec3 SimplicialMesh::element_centroid(std::size_t e) const {
    Vec3 c = Vec3::Zero();
    for (auto v : simplex(e)) c += vertices_[v];
    return c / static_cast<double>(dimension_ + 1);
}

Vec3 SimplicialMesh::element_normal(std::size_t e) const {
    const auto& s = simplices_[e];
    return (vertices_[s[1]] - vertices_[s[0]]).cross(vertices_[s[2]] - vertices_[s[0]]).normalized();
}

std::vector<std::array<std::uint32_t, 2>> SimplicialMesh::edges() const {
    std::vector<std::array<std::uint32_t, 2>> out;
    out.reserve(neighbors_.size() / 2);
    for (std::uint32_t v = 0; v < vertices_.size(); ++v)
        for (auto w : vertex_neighbors(v))
            if (v < w) out.push_back({v, w});
    return out;
}

double SimplicialMesh::mean_edge_length() const {
    double sum = 0.0;
    std::size_t count = 0;
    for (std::uint32_t v = 0; v < vertices_.size(); ++v) {
        for (auto w : vertex_neighbors(v)) {
            if (v < w) {
                sum += (vertices_[v] - vertices_[w]).norm();
                ++count;
            }
        }
    }
    return sum / static_cast<double>(count);
}

double SimplicialMesh::diameter() const {
    double best = 0.0;
    for (std::size_t i = 0; i < vertices_.size(); ++i)
        for (std::size_t j = i + 1; j < vertices_.size(); ++j)
            best = std::max(best, (vertices_[i] - vertices_[j]).squaredNorm());
    return std::sqrt(best);
}

Vec3 SimplicialMesh::bounding_box_min() const {
    Vec3 m = vertices_.front();
    for (const auto& v : vertices_) m = m.cwiseMin(v);
    return m;
}

Vec3 SimplicialMesh::bounding_box_max() const {
    Vec3 m = vertices_.front();
    for (const auto& v : vertices_) m = m.cwiseMax(v);
    return m;
}

Vec3 SimplicialMesh::centroid() const {
    Vec3 c = Vec3::Zero();
    for (const auto& v : vertices_) c += v;
    return c / static_cast<double>(vertices_.size());
}

// ---------------------------------------------------------------------------

NodeLocator::NodeLocator(const std::vector<Vec3>& points) : points_(&points) {
    std::vector<std::uint32_t> ids(points.size());
    std::iota(ids.begin(), ids.end(), 0u);
    nodes_.reserve(points.size());
    root_ = build(ids, 0, ids.size(), 0);
}

std::int32_t NodeLocator::build(std::vector<std::uint32_t>& ids, std::size_t lo, std::size_t hi,
                                int depth) {
    if (lo >= hi) return -1;
    const int axis = depth % 3;
    const std::size_t mid = lo + (hi - lo) / 2;
    const auto& pts = *points_;
    std::nth_element(ids.begin() + lo, ids.begin() + mid, ids.begin() + hi,
                     [&](std::uint32_t a, std::uint32_t b) {
                         if (pts[a][axis] != pts[b][axis]) return pts[a][axis] < pts[b][axis];
                         return a < b;
                     });
    const auto idx = static_cast<std::int32_t>(nodes_.size());
    nodes_.push_back(Node{ids[mid], -1, -1, axis});
    const auto left = build(ids, lo, mid, depth + 1);
    const auto right = build(ids, mid + 1, hi, depth + 1);
    nodes_[idx].left = left;
    nodes_[idx].right = right;
    return idx;
}

void NodeLocator::search(std::int32_t node, const Vec3& q, double& best_d2,
                         std::uint32_t& best) const {
    if (node < 0) return;
    const Node& nd = nodes_[node];
    const Vec3& p = (*points_)[nd.point];
    const double d2 = (p - q).squaredNorm();
    if (d2 < best_d2 || (d2 == best_d2 && nd.point < best)) {
        best_d2 = d2;
        best = nd.point;
    }
    const double diff = q[nd.axis] - p[nd.axis];
    const auto near = diff < 0 ? nd.left : nd.right;
    const auto far = diff < 0 ? nd.right : nd.left;
    search(near, q, best_d2, best);
    // <= keeps equal-distance candidates with lower indices reachable.
    if (diff * diff <= best_d2) search(far, q, best_d2, best);
}

NodeId NodeLocator::nearest(const Vec3& query) const {
    double best_d2 = std::numeric_limits<double>::infinity();
    std::uint32_t best = std::numeric_limits<std::uint32_t>::max();
    search(root_, query, best_d2, best);
    return NodeId{best};
}

NodeId nearest_node(const SimplicialMesh& mesh, const Vec3& point) {
    return NodeLocator(mesh.vertices()).nearest(point);
}

}  // namespace easbo
