#include "easbo/eikonal.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <fstream>
#include <limits>
#include <string>

#include <Eigen/Dense>

#include "easbo/errors.hpp"

namespace easbo {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double metric_length(const Vec3& e, const Eigen::Matrix3d& metric) {
    return std::sqrt(std::max(0.0, e.dot(metric * e)));
}

}  // namespace

ConductionTensorField build_conduction_tensor(const SimplicialMesh& mesh, double v_long, double v_trans) {
    if (!(v_trans > 0) || !(v_long >= v_trans)) {
        throw PreconditionError("conduction speeds need v_long >= v_trans > 0");
    }
    if (!mesh.has_fibers()) throw PreconditionError("conduction tensor needs a fiber field");
    ConductionTensorField field;
    field.v_long = v_long;
    field.v_trans = v_trans;
    field.tensors.reserve(mesh.num_simplices());
    field.metrics.reserve(mesh.num_simplices());
    const double a = v_trans * v_trans;
    const double b = v_long * v_long - a;
    const double ia = 1.0 / a;
    const double ib = 1.0 / (v_long * v_long) - ia;
    for (const auto& l : mesh.fibers()) {
        const Eigen::Matrix3d ll = l * l.transpose();
        field.tensors.push_back(a * Eigen::Matrix3d::Identity() + b * ll);
        // (aI + b ll)^{-1} = I/a + (1/(a+b) - 1/a) ll for unit l.
        field.metrics.push_back(ia * Eigen::Matrix3d::Identity() + ib * ll);
    }
    return field;
}

ConductionTensorField isotropic_conduction(const SimplicialMesh& mesh, double v) {
    if (!(v > 0)) throw PreconditionError("speed must be positive");
    ConductionTensorField field;
    field.v_long = field.v_trans = v;
    field.tensors.assign(mesh.num_simplices(), v * v * Eigen::Matrix3d::Identity());
    field.metrics.assign(mesh.num_simplices(), Eigen::Matrix3d::Identity() / (v * v));
    return field;
}

void write_conduction_tensors_csv(const ConductionTensorField& field, const std::filesystem::path& path,
                                  const std::string& metadata) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    if (!metadata.empty()) out << "# " << metadata << '\n';
    out << "element,d00,d01,d02,d11,d12,d22\n";
    char buf[160];
    for (std::size_t e = 0; e < field.tensors.size(); ++e) {
        const auto& d = field.tensors[e];
        std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", e, d(0, 0), d(0, 1), d(0, 2),
                      d(1, 1), d(1, 2), d(2, 2));
        out << buf;
    }
}

double ActivationMap::max_time() const {
    return times.empty() ? 0.0 : *std::max_element(times.begin(), times.end());
}

double edge_update(double t_a, const Vec3& x_a, const Vec3& x_target, const Eigen::Matrix3d& metric) {
    if (!std::isfinite(t_a)) return kInf;
    return t_a + metric_length(x_target - x_a, metric);
}

double triangle_update(double t_a, double t_b, const Vec3& x_a, const Vec3& x_b, const Vec3& x_c,
                       const Eigen::Matrix3d& metric) {
    const bool fa = std::isfinite(t_a), fb = std::isfinite(t_b);
    if (!fa && !fb) return kInf;
    if (!fa) return edge_update(t_b, x_b, x_c, metric);
    if (!fb) return edge_update(t_a, x_a, x_c, metric);

    // t(s) = t_a + s*delta + |r0 - s*e|_M over s in [0,1]; convex in s.
    const Vec3 e = x_b - x_a;
    const Vec3 r0 = x_c - x_a;
    const Vec3 Me = metric * e;
    const double c0 = r0.dot(metric * r0);
    const double c1 = r0.dot(Me);
    const double c2 = e.dot(Me);
    const double delta = t_b - t_a;
    auto eval = [&](double s) {
        return t_a + s * delta + std::sqrt(std::max(0.0, c0 - 2.0 * s * c1 + s * s * c2));
    };
    double best = std::min(eval(0.0), eval(1.0));
    const double denom = c2 - delta * delta;
    if (denom > 0 && c2 > 0) {
        const double disc = delta * delta * std::max(0.0, c2 * c0 - c1 * c1) / denom;
        const double root = std::sqrt(disc);
        for (double s : {(c1 - root) / c2, (c1 + root) / c2}) {
            if (s > 0.0 && s < 1.0) best = std::min(best, eval(s));
        }
    }
    return best;
}

double tetra_update(double t_a, double t_b, double t_c, const Vec3& x_a, const Vec3& x_b, const Vec3& x_c,
                    const Vec3& x_d, const Eigen::Matrix3d& metric) {
    double best = std::min({triangle_update(t_a, t_b, x_a, x_b, x_d, metric),
                            triangle_update(t_b, t_c, x_b, x_c, x_d, metric),
                            triangle_update(t_a, t_c, x_a, x_c, x_d, metric)});
    if (!std::isfinite(t_a) || !std::isfinite(t_b) || !std::isfinite(t_c)) return best;

    // Plane wave through the face: (x_i - x_d) . g = t_i - t_d, g^T D g = 1.
    Eigen::Matrix3d Y;
    Y.col(0) = x_a - x_d;
    Y.col(1) = x_b - x_d;
    Y.col(2) = x_c - x_d;
    const Eigen::Matrix3d Bt = Y.transpose();
    Eigen::FullPivLU<Eigen::Matrix3d> lu(Bt);
    if (!lu.isInvertible()) return best;
    const Vec3 p = lu.solve(Vec3(t_a, t_b, t_c));
    const Vec3 q = lu.solve(Vec3::Ones());
    const Eigen::Matrix3d D = metric.inverse();
    const double qa = q.dot(D * q);
    const double qb = -2.0 * p.dot(D * q);
    const double qc = p.dot(D * p) - 1.0;
    const double disc = qb * qb - 4.0 * qa * qc;
    if (qa <= 0 || disc < 0) return best;
    const double t_d = (-qb + std::sqrt(disc)) / (2.0 * qa);
    if (t_d < std::max({t_a, t_b, t_c})) return best;
    // The characteristic D g traced back from x_d must cross the face.
    const Vec3 g = p - t_d * q;
    const Vec3 mu = Y.fullPivLu().solve(-(D * g));
    if (mu.minCoeff() < -1e-12 * mu.cwiseAbs().maxCoeff()) return best;
    return std::min(best, t_d);
}

namespace {

class FimSolver {
public:
    FimSolver(const SimplicialMesh& mesh, const ConductionTensorField& field)
        : mesh_(mesh), field_(field) {}

    double local_solve(std::size_t v, const std::vector<double>& t) const {
        double best = kInf;
        const Vec3& xv = mesh_.vertex(v);
        for (auto e : mesh_.vertex_elements(v)) {
            const auto s = mesh_.simplex(e);
            const auto& metric = field_.metrics[e];
            std::array<std::uint32_t, 3> other{};
            int k = 0;
            for (auto w : s)
                if (w != v) other[k++] = w;
            double cand;
            if (k == 2) {
                cand = triangle_update(t[other[0]], t[other[1]], mesh_.vertex(other[0]), mesh_.vertex(other[1]), xv,
                                       metric);
            } else {
                cand = tetra_update(t[other[0]], t[other[1]], t[other[2]], mesh_.vertex(other[0]),
                                    mesh_.vertex(other[1]), mesh_.vertex(other[2]), xv, metric);
            }
            best = std::min(best, cand);
        }
        return best;
    }

private:
    const SimplicialMesh& mesh_;
    const ConductionTensorField& field_;
};

// Exact times for a homogeneous medium around the source. Every seeded node
// is queued so the iteration can still lower it where the medium varies.
void seed_source_ball(const SimplicialMesh& mesh, const ConductionTensorField& field, std::uint32_t source,
                      double ball_edges, std::vector<double>& t, std::vector<char>& active,
                      std::deque<std::uint32_t>& list) {
    const Vec3& x0 = mesh.vertex(source);
    Eigen::Matrix3d metric = Eigen::Matrix3d::Zero();
    const auto elements = mesh.vertex_elements(source);
    for (auto e : elements) metric += field.metrics[e];
    metric /= static_cast<double>(elements.size());
    const auto nbrs = mesh.vertex_neighbors(source);
    double mean_edge = 0.0;
    for (auto w : nbrs) mean_edge += (mesh.vertex(w) - x0).norm();
    mean_edge /= static_cast<double>(nbrs.size());
    const double radius = ball_edges * mean_edge;

    std::vector<std::uint32_t> frontier{source};
    std::vector<char> seen(mesh.num_vertices(), 0);
    seen[source] = 1;
    while (!frontier.empty()) {
        const auto v = frontier.back();
        frontier.pop_back();
        for (auto w : mesh.vertex_neighbors(v)) {
            if (seen[w]) continue;
            seen[w] = 1;
            const Vec3 d = mesh.vertex(w) - x0;
            // Direct neighbours are always seeded so the list is never empty.
            if (d.norm() > radius && v != source) continue;
            t[w] = metric_length(d, metric);
            active[w] = 1;
            list.push_back(w);
            frontier.push_back(w);
        }
    }
}

}  // namespace

ActivationMap solve_eikonal(const SimplicialMesh& mesh, const ConductionTensorField& tensors, NodeId source,
                            const EikonalOptions& options) {
    const std::size_t n = mesh.num_vertices();
    if (source.index >= n) throw PreconditionError("eikonal source is not a mesh node");
    if (tensors.metrics.size() != mesh.num_simplices()) {
        throw PreconditionError("conduction tensor field does not match the mesh");
    }
    FimSolver solver(mesh, tensors);
    ActivationMap map;
    map.source = source;
    map.times.assign(n, kInf);
    auto& t = map.times;
    t[source.index] = 0.0;

    std::vector<char> active(n, 0);
    std::vector<std::size_t> updates(n, 0);
    std::deque<std::uint32_t> list;
    if (options.source_ball_edges > 0) {
        seed_source_ball(mesh, tensors, source.index, options.source_ball_edges, t, active, list);
    } else {
        for (auto w : mesh.vertex_neighbors(source.index)) {
            t[w] = solver.local_solve(w, t);
            active[w] = 1;
            list.push_back(w);
        }
    }

    const double tol = options.tolerance;
    while (!list.empty()) {
        const auto v = list.front();
        list.pop_front();
        const double p = t[v];
        const double q = solver.local_solve(v, t);
        const double next = std::min(p, q);
        t[v] = next;
        if (++updates[v] > options.max_updates_per_node) {
            throw ComputeError("eikonal solver did not converge at node " + std::to_string(v) +
                               " (last change " + std::to_string(p - next) + " ms)");
        }
        if (!(p - next < tol)) {
            list.push_back(v);
            continue;
        }
        active[v] = 0;
        for (auto w : mesh.vertex_neighbors(v)) {
            if (active[w] || w == source.index) continue;
            const double old = t[w];
            const double cand = solver.local_solve(w, t);
            if (cand < old) {
                t[w] = cand;
                if (!(old - cand < tol)) {
                    active[w] = 1;
                    list.push_back(w);
                }
            }
        }
    }
    for (std::size_t v = 0; v < n; ++v) {
        if (!std::isfinite(t[v])) throw ComputeError("eikonal solve left node " + std::to_string(v) + " unreached");
    }
    return map;
}

}  // namespace easbo
