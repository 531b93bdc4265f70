#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <queue>
#include <set>

#include "easbo/errors.hpp"
#include "easbo/mesh.hpp"

namespace easbo {

namespace {

using Tri = std::array<std::uint32_t, 3>;

double min_angle(const Vec3& a, const Vec3& b, const Vec3& c) {
    auto angle = [](const Vec3& p, const Vec3& q, const Vec3& r) {
        const Vec3 u = q - p, v = r - p;
        return std::atan2(u.cross(v).norm(), u.dot(v));
    };
    return std::min({angle(a, b, c), angle(b, c, a), angle(c, a, b)});
}

double corner_angle(const Vec3& p, const Vec3& q, const Vec3& r) {
    const Vec3 u = q - p, v = r - p;
    return std::atan2(u.cross(v).norm(), u.dot(v));
}

Vec3 tri_normal(const Vec3& a, const Vec3& b, const Vec3& c) { return (b - a).cross(c - a); }

class Decimator {
public:
    explicit Decimator(const SimplicialMesh& mesh) : pos_(mesh.vertices()) {
        const std::size_t n = pos_.size();
        vtris_.resize(n);
        vertex_alive_.assign(n, 1);
        for (std::size_t e = 0; e < mesh.num_simplices(); ++e) {
            auto s = mesh.simplex(e);
            tris_.push_back({s[0], s[1], s[2]});
            tri_alive_.push_back(1);
            for (auto v : s) vtris_[v].push_back(static_cast<std::uint32_t>(e));
        }
        std::map<std::pair<std::uint32_t, std::uint32_t>, int> edge_count;
        for (const auto& t : tris_)
            for (int j = 0; j < 3; ++j)
                ++edge_count[std::minmax(t[j], t[(j + 1) % 3])];
        boundary_.assign(n, 0);
        for (const auto& [e, c] : edge_count) {
            if (c == 1) boundary_[e.first] = boundary_[e.second] = 1;
            edge_sum_ += (pos_[e.first] - pos_[e.second]).norm();
        }
        edge_count_ = edge_count.size();
        alive_count_ = n;
    }

    double mean_edge() const { return edge_sum_ / static_cast<double>(edge_count_); }

    void decimate(double target) {
        static constexpr double kThresholdsDeg[] = {25.0, 15.0, 8.0, 3.0, 0.0};
        for (double deg : kThresholdsDeg) {
            min_angle_ = deg * std::numbers::pi / 180.0;
            push_all_edges();
            while (mean_edge() < target && !heap_.empty()) {
                auto [len, a, b] = heap_.top();
                heap_.pop();
                (void)len;
                if (!vertex_alive_[a] || !vertex_alive_[b] || !adjacent(a, b)) continue;
                try_collapse(a, b);
            }
            if (mean_edge() >= target) return;
        }
        throw ComputeError("mesh decimation stalled at mean edge " + std::to_string(mean_edge()) +
                           " (target " + std::to_string(target) + ")");
    }

    void improve_by_flips() {
        for (int pass = 0; pass < 20; ++pass) {
            bool changed = false;
            for (std::uint32_t t = 0; t < tris_.size(); ++t) {
                if (!tri_alive_[t]) continue;
                for (int j = 0; j < 3 && tri_alive_[t]; ++j) {
                    if (try_flip(t, j)) {
                        changed = true;
                        break;
                    }
                }
            }
            if (!changed) break;
        }
    }

    SimplicialMesh build(const SimplicialMesh& original) const {
        std::vector<std::uint32_t> remap(pos_.size(), 0);
        std::vector<Vec3> vertices;
        for (std::size_t v = 0; v < pos_.size(); ++v) {
            if (vertex_alive_[v]) {
                remap[v] = static_cast<std::uint32_t>(vertices.size());
                vertices.push_back(pos_[v]);
            }
        }
        std::vector<Simplex> simplices;
        for (std::size_t t = 0; t < tris_.size(); ++t) {
            if (!tri_alive_[t]) continue;
            simplices.push_back({remap[tris_[t][0]], remap[tris_[t][1]], remap[tris_[t][2]], 0});
        }
        std::vector<Vec3> fibers;
        if (original.has_fibers()) {
            std::vector<Vec3> centroids(original.num_simplices());
            for (std::size_t e = 0; e < centroids.size(); ++e) centroids[e] = original.element_centroid(e);
            NodeLocator locator(centroids);
            for (const auto& s : simplices) {
                const Vec3 c = (vertices[s[0]] + vertices[s[1]] + vertices[s[2]]) / 3.0;
                const Vec3 n = tri_normal(vertices[s[0]], vertices[s[1]], vertices[s[2]]).normalized();
                Vec3 f = original.fiber(locator.nearest(c).index);
                f -= f.dot(n) * n;
                if (f.norm() < 1e-8) {
                    Eigen::Index imin = 0;
                    n.cwiseAbs().minCoeff(&imin);
                    f = n.cross(Vec3::Unit(imin));
                }
                f.normalize();
                f -= f.dot(n) * n;
                fibers.push_back(f.normalized());
            }
        }
        return SimplicialMesh(std::move(vertices), std::move(simplices), 2, std::move(fibers));
    }

    std::size_t alive_vertices() const { return alive_count_; }

private:
    struct Entry {
        double len;
        std::uint32_t a, b;
        bool operator>(const Entry& o) const {
            if (len != o.len) return len > o.len;
            if (a != o.a) return a > o.a;
            return b > o.b;
        }
    };

    std::vector<std::uint32_t> neighbors(std::uint32_t v) const {
        std::vector<std::uint32_t> out;
        for (auto t : vtris_[v])
            for (auto w : tris_[t])
                if (w != v) out.push_back(w);
        std::sort(out.begin(), out.end());
        out.erase(std::unique(out.begin(), out.end()), out.end());
        return out;
    }

    bool adjacent(std::uint32_t a, std::uint32_t b) const {
        for (auto t : vtris_[a])
            for (auto w : tris_[t])
                if (w == b) return true;
        return false;
    }

    void push_edges_of(std::uint32_t v) {
        for (auto w : neighbors(v)) {
            heap_.push(Entry{(pos_[v] - pos_[w]).norm(), std::min(v, w), std::max(v, w)});
        }
    }

    void push_all_edges() {
        heap_ = {};
        for (std::uint32_t v = 0; v < pos_.size(); ++v) {
            if (!vertex_alive_[v]) continue;
            for (auto w : neighbors(v))
                if (v < w) heap_.push(Entry{(pos_[v] - pos_[w]).norm(), v, w});
        }
    }

    // Quality (smallest resulting angle) of collapsing u onto v, or -1 if invalid.
    double collapse_quality(std::uint32_t u, std::uint32_t v) const {
        if (boundary_[u]) return -1.0;
        std::vector<std::uint32_t> opposite;
        for (auto t : vtris_[u]) {
            const auto& tri = tris_[t];
            if (std::find(tri.begin(), tri.end(), v) == tri.end()) continue;
            for (auto w : tri)
                if (w != u && w != v) opposite.push_back(w);
        }
        if (opposite.size() != 2) return -1.0;
        const auto nu = neighbors(u);
        const auto nv = neighbors(v);
        std::vector<std::uint32_t> common;
        std::set_intersection(nu.begin(), nu.end(), nv.begin(), nv.end(), std::back_inserter(common));
        std::sort(opposite.begin(), opposite.end());
        if (common != opposite) return -1.0;
        for (auto o : opposite)
            if (neighbors(o).size() <= 3) return -1.0;
        if (nu.size() + nv.size() < 4 + 3) return -1.0;

        double quality = std::numbers::pi;
        for (auto t : vtris_[u]) {
            Tri tri = tris_[t];
            if (std::find(tri.begin(), tri.end(), v) != tri.end()) continue;
            const Vec3 old_n = tri_normal(pos_[tri[0]], pos_[tri[1]], pos_[tri[2]]);
            for (auto& w : tri)
                if (w == u) w = v;
            const Vec3 new_n = tri_normal(pos_[tri[0]], pos_[tri[1]], pos_[tri[2]]);
            if (new_n.norm() <= 1e-14 * old_n.norm()) return -1.0;
            if (new_n.normalized().dot(old_n.normalized()) < 0.3) return -1.0;
            quality = std::min(quality, min_angle(pos_[tri[0]], pos_[tri[1]], pos_[tri[2]]));
        }
        return quality;
    }

    void try_collapse(std::uint32_t a, std::uint32_t b) {
        const double qab = collapse_quality(a, b);
        const double qba = collapse_quality(b, a);
        std::uint32_t u = a, v = b;
        double q = qab;
        if (qba > qab) {
            u = b;
            v = a;
            q = qba;
        }
        if (q < 0 || q < min_angle_) return;

        const auto nu = neighbors(u);
        const auto nv = neighbors(v);
        for (auto w : nu) {
            edge_sum_ -= (pos_[u] - pos_[w]).norm();
            --edge_count_;
        }
        for (auto w : nu) {
            if (w == v || std::binary_search(nv.begin(), nv.end(), w)) continue;
            edge_sum_ += (pos_[v] - pos_[w]).norm();
            ++edge_count_;
        }

        for (auto t : std::vector<std::uint32_t>(vtris_[u])) {
            auto& tri = tris_[t];
            const bool has_v = std::find(tri.begin(), tri.end(), v) != tri.end();
            if (has_v) {
                tri_alive_[t] = 0;
                for (auto w : tri) {
                    auto& list = vtris_[w];
                    list.erase(std::remove(list.begin(), list.end(), t), list.end());
                }
            } else {
                for (auto& w : tri)
                    if (w == u) w = v;
                vtris_[v].push_back(t);
            }
        }
        vtris_[u].clear();
        vertex_alive_[u] = 0;
        --alive_count_;

        push_edges_of(v);
        for (auto w : neighbors(v)) push_edges_of(w);
    }

    // Flips edge j of triangle t when that improves the opposite-angle sum
    // and the two triangles are nearly coplanar.
    bool try_flip(std::uint32_t t, int j) {
        const auto a = tris_[t][j], b = tris_[t][(j + 1) % 3], c = tris_[t][(j + 2) % 3];
        if (boundary_[a] && boundary_[b]) return false;
        std::uint32_t t2 = 0, d = 0;
        bool found = false;
        for (auto s : vtris_[a]) {
            if (s == t) continue;
            const auto& tri = tris_[s];
            for (int k = 0; k < 3; ++k) {
                if (tri[k] == b && tri[(k + 1) % 3] == a) {
                    t2 = s;
                    d = tri[(k + 2) % 3];
                    found = true;
                }
            }
        }
        if (!found || c == d || adjacent(c, d)) return false;
        const double sum = corner_angle(pos_[c], pos_[a], pos_[b]) + corner_angle(pos_[d], pos_[a], pos_[b]);
        if (sum <= std::numbers::pi + 1e-9) return false;
        const Vec3 n1 = tri_normal(pos_[a], pos_[b], pos_[c]).normalized();
        const Vec3 n2 = tri_normal(pos_[b], pos_[a], pos_[d]).normalized();
        if (n1.dot(n2) < 0.9) return false;
        const Vec3 m1 = tri_normal(pos_[a], pos_[d], pos_[c]);
        const Vec3 m2 = tri_normal(pos_[d], pos_[b], pos_[c]);
        if (m1.norm() < 1e-14 || m2.norm() < 1e-14) return false;
        const Vec3 navg = (n1 + n2).normalized();
        if (m1.normalized().dot(navg) < 0.5 || m2.normalized().dot(navg) < 0.5) return false;

        auto drop = [&](std::uint32_t w, std::uint32_t tri) {
            auto& list = vtris_[w];
            list.erase(std::remove(list.begin(), list.end(), tri), list.end());
        };
        const double old_len = (pos_[a] - pos_[b]).norm();
        tris_[t] = {a, d, c};
        tris_[t2] = {d, b, c};
        drop(b, t);
        drop(a, t2);
        vtris_[d].push_back(t);
        vtris_[c].push_back(t2);
        edge_sum_ += (pos_[c] - pos_[d]).norm() - old_len;
        return true;
    }

    std::vector<Vec3> pos_;
    std::vector<Tri> tris_;
    std::vector<char> tri_alive_;
    std::vector<std::vector<std::uint32_t>> vtris_;
    std::vector<char> vertex_alive_;
    std::vector<char> boundary_;
    double edge_sum_ = 0.0;
    std::size_t edge_count_ = 0;
    std::size_t alive_count_ = 0;
    double min_angle_ = 0.0;
    std::priority_queue<Entry, std::vector<Entry>, std::greater<>> heap_;
};

}  // namespace

SimplicialMesh coarsen_mesh(const SimplicialMesh& mesh, double target_edge_factor) {
    if (!(target_edge_factor >= 1.0)) throw PreconditionError("target_edge_factor must be >= 1");
    if (mesh.dimension() != 2) throw PreconditionError("coarsen_mesh supports triangulated surfaces only");
    if (mesh.num_vertices() < 8) {
        throw ComputeError("mesh decimation failure: " + std::to_string(mesh.num_vertices()) +
                           " vertices is too few to coarsen");
    }
    if (target_edge_factor == 1.0) return mesh;

    Decimator dec(mesh);
    const double target = target_edge_factor * dec.mean_edge();
    dec.decimate(target);
    dec.improve_by_flips();
    if (dec.alive_vertices() < 4) throw ComputeError("mesh decimation collapsed the surface");
    return dec.build(mesh);
}

}  // namespace easbo
