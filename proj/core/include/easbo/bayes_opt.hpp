#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "easbo/errors.hpp"
#include "easbo/gp.hpp"
#include "easbo/mesh.hpp"
#include "easbo/mf_gp.hpp"

namespace easbo {

enum class Fidelity { high, low };

const char* fidelity_name(Fidelity f);

/// When a repeated LCB argmin (an already-evaluated node) ends the run.
enum class RepeatStop {
    when_truth_unknown,  ///< only if no convergence test is available
    always,
    never,
};

struct BoConfig {
    std::size_t n_initial = 10;  ///< single-fidelity initial design
    std::size_t n_high = 5;      ///< multi-fidelity HF initial design
    std::size_t n_low = 35;      ///< multi-fidelity LF pool
    std::size_t max_acquisitions = 100;
    double beta = 2.0;
    double lf_cost_ratio = 0.6 / 5.6;
    std::uint64_t seed = 0;
    int fit_restarts = 8;
    double smoothness = 2.5;
    RepeatStop repeat_stop = RepeatStop::when_truth_unknown;

    /// Throws ValidationError on out-of-range fields.
    void validate() const;
};

/// Single-fidelity problem. Node ids refer to the mesh of `basis`.
struct SfProblem {
    std::shared_ptr<const EigenBasis> basis;
    std::function<double(NodeId)> loss;
    /// Synthetic mode: true when the node is within tolerance of the truth.
    std::function<bool(NodeId)> is_converged;
    /// Reference length for hyperparameter bounds (mesh diameter, mm).
    double length_reference = 1.0;
};

/// Two-fidelity problem. The LF model lives on a coarse mesh whose nodes are
/// identified with HF nodes through `low_to_high`.
struct MfProblem {
    SfProblem high;
    std::vector<NodeId> low_to_high;
    std::function<double(std::size_t low_index)> low_loss;
};

struct Evaluation {
    std::size_t iteration = 0;  ///< 0 for the initial design
    Fidelity fidelity = Fidelity::high;
    NodeId node{0u};            ///< HF node id
    double loss = 0.0;
    double cumulative_cost = 0.0;
    bool converged = false;
};

enum class StopReason { converged, repeated_acquisition, budget_exhausted, all_nodes_evaluated };

const char* stop_reason_name(StopReason r);

struct BoState {
    std::vector<Evaluation> evaluations;
    double cost = 0.0;
    std::optional<NodeId> best_node;
    double best_loss = 0.0;
    bool converged = false;
    std::size_t acquisitions = 0;
    std::size_t hf_evaluations = 0;
    std::size_t lf_evaluations = 0;
    StopReason stop_reason = StopReason::budget_exhausted;
    std::optional<GpModel> sf_model;
    std::optional<MfGpModel> mf_model;
};

/// Raised when a forward evaluation or a surrogate fit fails mid-run; carries
/// the audit trail up to the failure.
class BoFailure : public ComputeError {
public:
    BoFailure(const std::string& what, BoState partial) : ComputeError(what), partial_(std::move(partial)) {}
    const BoState& partial() const { return partial_; }

private:
    BoState partial_;
};

/// `count` distinct ids from [0, num_nodes), uniform without replacement.
std::vector<NodeId> initial_design(std::size_t num_nodes, std::size_t count, std::uint64_t seed);

/// argmin over non-excluded nodes of means - beta * sqrt(variances); lowest
/// index wins ties. `excluded` may be empty or have one flag per node.
NodeId acquire_lcb(const Eigen::VectorXd& means, const Eigen::VectorXd& variances, const std::vector<bool>& excluded,
                   double beta);

BoState run_sf_bo(const SfProblem& problem, const BoConfig& config);
BoState run_mf_bo(const MfProblem& problem, const BoConfig& config);

/// Cost recomputed from the audit trail.
double audit_cost(const std::vector<Evaluation>& evaluations, double lf_cost_ratio);

/// Audit CSV; the first line is "# <metadata>" when metadata is non-empty.
void write_audit_csv(const BoState& state, const SimplicialMesh& high_mesh, const std::filesystem::path& path,
                     const std::string& metadata);

}  // namespace easbo
