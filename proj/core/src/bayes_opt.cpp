#include "easbo/bayes_opt.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <random>

namespace easbo {

const char* fidelity_name(Fidelity f) { return f == Fidelity::high ? "high" : "low"; }

const char* stop_reason_name(StopReason r) {
    switch (r) {
        case StopReason::converged: return "converged";
        case StopReason::repeated_acquisition: return "repeated_acquisition";
        case StopReason::budget_exhausted: return "budget_exhausted";
        case StopReason::all_nodes_evaluated: return "all_nodes_evaluated";
    }
    return "unknown";
}

void BoConfig::validate() const {
    if (n_initial < 1 || n_high < 1 || n_low < 1) throw ValidationError("initial design sizes must be >= 1");
    if (!(beta > 0)) throw ValidationError("LCB weight beta must be positive");
    if (!(lf_cost_ratio > 0 && lf_cost_ratio <= 1)) throw ValidationError("LF cost ratio must lie in (0, 1]");
    if (fit_restarts < 1) throw ValidationError("fit restarts must be >= 1");
    if (!(smoothness > 0)) throw ValidationError("smoothness must be positive");
}

std::vector<NodeId> initial_design(std::size_t num_nodes, std::size_t count, std::uint64_t seed) {
    if (count > num_nodes) {
        throw PreconditionError("initial design of " + std::to_string(count) + " nodes exceeds node count " +
                                std::to_string(num_nodes));
    }
    // Partial Fisher-Yates; the bounded draws use rejection sampling so the
    // sequence does not depend on the standard library's distributions.
    std::vector<std::uint32_t> ids(num_nodes);
    for (std::size_t i = 0; i < num_nodes; ++i) ids[i] = static_cast<std::uint32_t>(i);
    std::mt19937_64 rng(seed);
    auto bounded = [&](std::uint64_t range) {
        const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % range;
        for (;;) {
            const std::uint64_t r = rng();
            if (r < limit) return r % range;
        }
    };
    std::vector<NodeId> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t j = i + bounded(num_nodes - i);
        std::swap(ids[i], ids[j]);
        out.emplace_back(ids[i]);
    }
    return out;
}

NodeId acquire_lcb(const Eigen::VectorXd& means, const Eigen::VectorXd& variances, const std::vector<bool>& excluded,
                   double beta) {
    if (means.size() != variances.size()) throw PreconditionError("means and variances differ in length");
    if (!excluded.empty() && static_cast<Eigen::Index>(excluded.size()) != means.size()) {
        throw PreconditionError("exclusion mask does not cover all nodes");
    }
    Eigen::Index best = -1;
    double best_value = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < means.size(); ++i) {
        if (!excluded.empty() && excluded[static_cast<std::size_t>(i)]) continue;
        const double v = means[i] - beta * std::sqrt(std::max(variances[i], 0.0));
        if (best < 0 || v < best_value) {
            best = i;
            best_value = v;
        }
    }
    if (best < 0) throw PreconditionError("every node is excluded from acquisition");
    return NodeId(static_cast<std::size_t>(best));
}

double audit_cost(const std::vector<Evaluation>& evaluations, double lf_cost_ratio) {
    std::size_t high = 0, low = 0;
    for (const auto& e : evaluations) (e.fidelity == Fidelity::high ? high : low)++;
    return static_cast<double>(high) + lf_cost_ratio * static_cast<double>(low);
}

namespace {

class Recorder {
public:
    Recorder(BoState& state, const BoConfig& config, std::size_t num_nodes)
        : state_(state), config_(config), evaluated_(num_nodes, false) {}

    bool evaluated(NodeId n) const { return evaluated_[n.index]; }
    const std::vector<bool>& mask() const { return evaluated_; }
    bool exhausted() const { return state_.hf_evaluations >= evaluated_.size(); }

    void high(const SfProblem& p, NodeId node, std::size_t iteration) {
        double loss = 0.0;
        try {
            loss = p.loss(node);
        } catch (const std::exception& e) {
            throw BoFailure("HF forward model failed at node " + std::to_string(node.index) + ": " + e.what(), state_);
        }
        if (!std::isfinite(loss)) {
            throw BoFailure("HF loss at node " + std::to_string(node.index) + " is not finite", state_);
        }
        const bool conv = p.is_converged ? p.is_converged(node) : false;
        evaluated_[node.index] = true;
        state_.hf_evaluations++;
        push({iteration, Fidelity::high, node, loss, 0.0, conv});
        if (!state_.best_node || loss < state_.best_loss) {
            state_.best_node = node;
            state_.best_loss = loss;
        }
        state_.converged = state_.converged || conv;
    }

    void low(const MfProblem& p, std::size_t low_index) {
        const NodeId node = p.low_to_high.at(low_index);
        double loss = 0.0;
        try {
            loss = p.low_loss(low_index);
        } catch (const std::exception& e) {
            throw BoFailure("LF forward model failed at LF node " + std::to_string(low_index) + ": " + e.what(), state_);
        }
        if (!std::isfinite(loss)) {
            throw BoFailure("LF loss at LF node " + std::to_string(low_index) + " is not finite", state_);
        }
        state_.lf_evaluations++;
        push({0, Fidelity::low, node, loss, 0.0, false});
    }

private:
    void push(Evaluation e) {
        state_.evaluations.push_back(e);
        state_.cost = static_cast<double>(state_.hf_evaluations) +
                      config_.lf_cost_ratio * static_cast<double>(state_.lf_evaluations);
        state_.evaluations.back().cumulative_cost = state_.cost;
    }

    BoState& state_;
    const BoConfig& config_;
    std::vector<bool> evaluated_;
};

void check_problem(const SfProblem& p) {
    if (!p.basis) throw PreconditionError("BO problem has no eigenbasis");
    if (!p.loss) throw PreconditionError("BO problem has no loss function");
    if (!(p.length_reference > 0)) throw PreconditionError("BO length reference must be positive");
}

bool stop_on_repeat(const BoConfig& c, const SfProblem& p) {
    switch (c.repeat_stop) {
        case RepeatStop::always: return true;
        case RepeatStop::never: return false;
        case RepeatStop::when_truth_unknown: return !p.is_converged;
    }
    return false;
}

// Shared acquisition loop; `refit` conditions the surrogate and returns the
// posterior over all nodes.
template <typename Refit>
void acquisition_loop(const SfProblem& p, const BoConfig& config, BoState& state, Recorder& rec, Refit&& refit) {
    const bool repeat_stops = stop_on_repeat(config, p);
    for (;;) {
        if (state.converged) {
            state.stop_reason = StopReason::converged;
            return;
        }
        if (rec.exhausted()) {
            state.stop_reason = StopReason::all_nodes_evaluated;
            return;
        }
        if (state.acquisitions >= config.max_acquisitions) {
            state.stop_reason = StopReason::budget_exhausted;
            return;
        }
        Posterior post;
        try {
            post = refit(state.acquisitions);
        } catch (const BoFailure&) {
            throw;
        } catch (const std::exception& e) {
            throw BoFailure(std::string("surrogate fit failed: ") + e.what(), state);
        }
        if (repeat_stops) {
            const NodeId free_choice = acquire_lcb(post.means, post.variances, {}, config.beta);
            if (rec.evaluated(free_choice)) {
                state.stop_reason = StopReason::repeated_acquisition;
                return;
            }
        }
        const NodeId next = acquire_lcb(post.means, post.variances, rec.mask(), config.beta);
        state.acquisitions++;
        rec.high(p, next, state.acquisitions);
    }
}

std::pair<std::vector<NodeId>, Eigen::VectorXd> observations(const BoState& s, Fidelity f) {
    std::vector<NodeId> x;
    std::vector<double> y;
    for (const auto& e : s.evaluations) {
        if (e.fidelity != f) continue;
        x.push_back(e.node);
        y.push_back(e.loss);
    }
    return {x, Eigen::Map<const Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(y.size()))};
}

}  // namespace

BoState run_sf_bo(const SfProblem& problem, const BoConfig& config) {
    config.validate();
    check_problem(problem);
    const std::size_t n = problem.basis->num_nodes();
    BoState state;
    Recorder rec(state, config, n);
    for (NodeId node : initial_design(n, config.n_initial, config.seed)) rec.high(problem, node, 0);

    acquisition_loop(problem, config, state, rec, [&](std::size_t iteration) {
        auto [x, y] = observations(state, Fidelity::high);
        GpFitOptions fo;
        fo.restarts = config.fit_restarts;
        fo.seed = mix_seed(config.seed, iteration);
        fo.length_reference = problem.length_reference;
        fo.smoothness = config.smoothness;
        state.sf_model = fit_hyperparameters(problem.basis, std::move(x), std::move(y), fo);
        return state.sf_model->posterior_all();
    });
    return state;
}

BoState run_mf_bo(const MfProblem& problem, const BoConfig& config) {
    config.validate();
    check_problem(problem.high);
    if (!problem.low_loss) throw PreconditionError("MF problem has no LF loss function");
    const std::size_t n = problem.high.basis->num_nodes();
    for (NodeId m : problem.low_to_high) {
        if (m.index >= n) throw PreconditionError("LF-to-HF node map points outside the HF mesh");
    }
    BoState state;
    Recorder rec(state, config, n);
    // Separate streams keep the HF design independent of the LF pool size.
    for (NodeId node : initial_design(n, config.n_high, mix_seed(config.seed, 0xA1))) rec.high(problem.high, node, 0);
    for (NodeId low : initial_design(problem.low_to_high.size(), config.n_low, mix_seed(config.seed, 0xB2))) {
        rec.low(problem, low.index);
    }

    acquisition_loop(problem.high, config, state, rec, [&](std::size_t iteration) {
        auto [xh, yh] = observations(state, Fidelity::high);
        auto [xl, yl] = observations(state, Fidelity::low);
        MfFitOptions fo;
        fo.restarts = config.fit_restarts;
        fo.seed = mix_seed(config.seed, iteration);
        fo.length_reference = problem.high.length_reference;
        fo.smoothness = config.smoothness;
        state.mf_model = fit_mf_hyperparameters(problem.high.basis, std::move(xl), std::move(yl), std::move(xh),
                                                std::move(yh), fo);
        return state.mf_model->posterior_all();
    });
    return state;
}

void write_audit_csv(const BoState& state, const SimplicialMesh& high_mesh, const std::filesystem::path& path,
                     const std::string& metadata) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write audit CSV " + path.string());
    if (!metadata.empty()) out << "# " << metadata << '\n';
    out << "iteration,fidelity,node_id,x,y,z,loss,cum_cost,converged\n";
    char buf[512];
    for (const auto& e : state.evaluations) {
        const Vec3& p = high_mesh.vertex(e.node);
        std::snprintf(buf, sizeof buf, "%zu,%s,%u,%.17g,%.17g,%.17g,%.17g,%.17g,%d\n", e.iteration,
                      fidelity_name(e.fidelity), e.node.index, p.x(), p.y(), p.z(), e.loss, e.cumulative_cost,
                      e.converged ? 1 : 0);
        out << buf;
    }
    if (!out) throw Error("failed writing audit CSV " + path.string());
}

}  // namespace easbo
