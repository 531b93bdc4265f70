#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "easbo/bayes_opt.hpp"
#include "easbo/ecg.hpp"
#include "easbo/eikonal.hpp"
#include "easbo/fem.hpp"
#include "easbo/mesh.hpp"
#include "easbo_cli/config.hpp"

namespace easbo::cli {

/// Progress and warnings: written to stderr and appended to <out>/run.log.
class RunLog {
public:
    RunLog() = default;
    explicit RunLog(const std::filesystem::path& file, bool echo = true);
    void info(const std::string& message);
    void warn(const std::string& message);

private:
    void write(const std::string& line);
    std::ofstream file_;
    bool echo_ = true;
};

/// "config_hash=<hash> seed=<seed>" for output headers.
std::string metadata_line(const ExperimentConfig& config, std::uint64_t seed);

struct ArtifactPaths {
    std::filesystem::path dir;
    std::filesystem::path high_mesh, low_mesh;
    std::filesystem::path high_basis, low_basis;
    std::filesystem::path high_leads, low_leads;
    std::filesystem::path high_tensors, low_tensors;
    std::filesystem::path stamp;
    std::filesystem::path reference, truth;
};

ArtifactPaths artifact_paths(const std::filesystem::path& out);

/// High- and low-fidelity meshes with fibers, generated or loaded.
struct Geometry {
    std::shared_ptr<const SimplicialMesh> high;
    std::shared_ptr<const SimplicialMesh> low;
};

Geometry build_geometry(const ExperimentConfig& config);

/// Lead fields for one fidelity, using electrodes placed around the HF mesh.
LeadFieldSet build_lead_fields(const ExperimentConfig& config, const SimplicialMesh& high,
                               const SimplicialMesh& target);

/// Eikonal + ECG forward model on one mesh.
class ForwardModel {
public:
    ForwardModel(std::shared_ptr<const SimplicialMesh> mesh, const ExperimentConfig& config, const LeadFieldSet& leads);

    const SimplicialMesh& mesh() const { return *mesh_; }
    std::shared_ptr<const SimplicialMesh> mesh_ptr() const { return mesh_; }
    const ConductionTensorField& tensors() const { return tensors_; }

    ActivationMap activation(NodeId source) const;
    EcgTrace simulate(NodeId source, const TimeGrid& grid) const;
    double loss(NodeId source, const EcgTrace& reference) const;

private:
    std::shared_ptr<const SimplicialMesh> mesh_;
    ConductionTensorField tensors_;
    EcgOperator op_;
    ActionPotentialParams ap_;
    EikonalOptions eikonal_;
};

struct PreprocessReport {
    bool up_to_date = false;
    std::size_t high_nodes = 0, low_nodes = 0;
    std::size_t high_eigenpairs = 0, low_eigenpairs = 0;
    std::vector<std::string> warnings;
};

PreprocessReport preprocess(const ExperimentConfig& config, const std::filesystem::path& out, bool force,
                            std::uint64_t seed, RunLog& log);

/// Everything a BO run needs, loaded from the preprocessing artifacts.
struct Workspace {
    std::shared_ptr<const SimplicialMesh> high_mesh;
    std::shared_ptr<const SimplicialMesh> low_mesh;
    std::shared_ptr<const EigenBasis> basis;
    std::shared_ptr<const ForwardModel> high;
    std::shared_ptr<const ForwardModel> low;
    /// HF node identified with each LF node (nearest vertex).
    std::vector<NodeId> low_to_high;
};

/// Throws PreconditionError when the artifacts are missing or stale.
Workspace load_workspace(const ExperimentConfig& config, const std::filesystem::path& out);

struct TruthRecord {
    NodeId node;
    NodeId low_node;
    Vec3 position;
    double snap_distance = 0.0;
    double diameter = 0.0;
    double tolerance = 0.0;
    double self_loss = 0.0;
    std::vector<double> correlations;
    std::vector<std::string> lead_names;
    TimeGrid grid;
    std::string truth_hash;
};

void write_truth_record(const TruthRecord& truth, const std::filesystem::path& path, const std::string& metadata);
TruthRecord read_truth_record(const std::filesystem::path& path);

/// Truth record and reference ECG; throws when missing or stale.
struct Reference {
    TruthRecord truth;
    EcgTrace ecg;
};

Reference load_reference(const ExperimentConfig& config, const std::filesystem::path& out);

/// Geodesic distance (isotropic eikonal at unit speed) from `node` to every
/// HF node.
std::vector<double> geodesic_distances(const ExperimentConfig& config, const SimplicialMesh& mesh, NodeId node);

/// Loss functions and convergence test wired to the workspace.
struct Problems {
    SfProblem sf;
    MfProblem mf;
    std::shared_ptr<const std::vector<double>> distance_to_truth;
};

Problems make_problems(const ExperimentConfig& config, const Workspace& ws, const Reference& ref);

}  // namespace easbo::cli
