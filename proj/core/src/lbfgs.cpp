#include "easbo/lbfgs.hpp"

#include <cmath>
#include <deque>
#include <limits>

#include "easbo/errors.hpp"

namespace easbo {

namespace {

struct Eval {
    double f = std::numeric_limits<double>::infinity();
    Eigen::VectorXd g;
    bool ok = false;
};

Eval evaluate(const GradientObjective& objective, const Eigen::VectorXd& x) {
    Eval e;
    e.g.resize(x.size());
    try {
        e.f = objective(x, e.g);
        e.ok = std::isfinite(e.f) && e.g.allFinite();
    } catch (const ComputeError&) {
        e.ok = false;
    }
    return e;
}

}  // namespace

MinimizeResult minimize_box_lbfgs(const GradientObjective& objective, Eigen::VectorXd x0,
                                  const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                                  const LbfgsOptions& options) {
    const auto n = x0.size();
    if (lower.size() != n || upper.size() != n || (lower.array() > upper.array()).any()) {
        throw PreconditionError("invalid bounds for box L-BFGS");
    }
    auto project = [&](Eigen::VectorXd v) { return v.cwiseMax(lower).cwiseMin(upper); };

    MinimizeResult result;
    Eigen::VectorXd x = project(std::move(x0));
    Eval cur = evaluate(objective, x);
    if (!cur.ok) throw ComputeError("objective is not finite at the starting point");

    std::deque<std::pair<Eigen::VectorXd, Eigen::VectorXd>> memory;  // (s, y)
    auto free_mask = [&](const Eigen::VectorXd& pt, const Eigen::VectorXd& g) {
        Eigen::VectorXd mask = Eigen::VectorXd::Ones(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            if ((pt[i] <= lower[i] && g[i] > 0) || (pt[i] >= upper[i] && g[i] < 0)) mask[i] = 0.0;
        }
        return mask;
    };

    for (int it = 0; it < options.max_iterations; ++it) {
        result.iterations = it + 1;
        const Eigen::VectorXd mask = free_mask(x, cur.g);
        const Eigen::VectorXd pg = cur.g.cwiseProduct(mask);
        if (pg.lpNorm<Eigen::Infinity>() < options.gradient_tolerance) {
            result.converged = true;
            break;
        }

        // Two-loop recursion on the free subspace.
        Eigen::VectorXd q = pg;
        std::vector<double> alphas(memory.size());
        for (std::size_t k = memory.size(); k-- > 0;) {
            const auto& [s, y] = memory[k];
            const double rho = 1.0 / y.dot(s);
            alphas[k] = rho * s.dot(q);
            q -= alphas[k] * y;
        }
        if (!memory.empty()) {
            const auto& [s, y] = memory.back();
            q *= s.dot(y) / y.dot(y);
        }
        for (std::size_t k = 0; k < memory.size(); ++k) {
            const auto& [s, y] = memory[k];
            const double rho = 1.0 / y.dot(s);
            const double beta = rho * y.dot(q);
            q += (alphas[k] - beta) * s;
        }
        Eigen::VectorXd d = -q.cwiseProduct(mask);
        if (!(d.dot(pg) < 0)) {
            memory.clear();
            d = -pg;
        }

        double step = memory.empty() ? std::min(1.0, 1.0 / pg.norm()) : 1.0;
        Eigen::VectorXd x_new;
        Eval next;
        bool accepted = false;
        for (int ls = 0; ls < 50; ++ls) {
            x_new = project(x + step * d);
            if ((x_new - x).lpNorm<Eigen::Infinity>() == 0.0) break;
            next = evaluate(objective, x_new);
            if (next.ok && next.f <= cur.f + 1e-4 * cur.g.dot(x_new - x)) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) {
            if (!memory.empty()) {
                memory.clear();
                continue;
            }
            break;
        }

        const Eigen::VectorXd s = x_new - x;
        const Eigen::VectorXd y = next.g - cur.g;
        if (s.dot(y) > 1e-10 * s.norm() * y.norm()) {
            memory.emplace_back(s, y);
            if (static_cast<int>(memory.size()) > options.memory) memory.pop_front();
        }
        const double decrease = cur.f - next.f;
        x = std::move(x_new);
        cur = std::move(next);
        if (decrease <= options.function_tolerance * (std::abs(cur.f) + 1.0)) {
            result.converged = true;
            break;
        }
    }
    result.x = x;
    result.value = cur.f;
    return result;
}

}  // namespace easbo
