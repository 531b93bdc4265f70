#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "easbo/bayes_opt.hpp"
#include "easbo_cli/config.hpp"
#include "easbo_cli/pipeline.hpp"

namespace easbo::cli {

enum class Mode { sf, mf };

const char* mode_name(Mode m);

struct CommandOptions {
    /// Overrides output.dir from the config.
    std::optional<std::filesystem::path> out;
    bool force = false;
    std::optional<std::uint64_t> seed;
    Mode mode = Mode::sf;
    /// Suppress log echo to stderr.
    bool quiet = false;
};

std::filesystem::path output_dir(const ExperimentConfig& config, const CommandOptions& options);

struct GenMeshResult {
    std::filesystem::path high_mesh, low_mesh;
    std::size_t high_nodes = 0, low_nodes = 0;
};

GenMeshResult cmd_gen_mesh(const ExperimentConfig& config, const CommandOptions& options);
PreprocessReport cmd_preprocess(const ExperimentConfig& config, const CommandOptions& options);

struct GroundTruthResult {
    TruthRecord truth;
    std::filesystem::path reference;
    std::filesystem::path record;
};

GroundTruthResult cmd_ground_truth(const ExperimentConfig& config, const CommandOptions& options);

struct RunSummary {
    Mode mode = Mode::sf;
    std::uint64_t seed = 0;
    bool converged = false;
    std::size_t acquisitions = 0;
    std::size_t hf_evaluations = 0;
    std::size_t lf_evaluations = 0;
    double initial_cost = 0.0;
    double total_cost = 0.0;
    NodeId best_node;
    double best_loss = 0.0;
    double geodesic_error = 0.0;
    StopReason stop_reason = StopReason::budget_exhausted;
};

struct RunResult {
    BoState state;
    RunSummary summary;
    std::filesystem::path dir;
    std::filesystem::path audit;
};

/// Runs one BO loop on a loaded workspace without writing anything.
BoState run_bo(const ExperimentConfig& config, const Problems& problems, Mode mode, std::uint64_t seed);
RunSummary summarize(const ExperimentConfig& config, const BoState& state, const Problems& problems, Mode mode,
                     std::uint64_t seed);

RunResult cmd_run(const ExperimentConfig& config, const CommandOptions& options);

struct BenchmarkRow {
    Mode mode = Mode::sf;
    std::uint64_t seed = 0;
    bool ok = false;
    std::string error;
    RunSummary summary;
};

struct ModeAggregate {
    std::size_t runs = 0;
    std::size_t failures = 0;
    std::size_t converged = 0;
    double convergence_rate = 0.0;
    double cost_median = 0.0, cost_iqr = 0.0;
    double acquisitions_median = 0.0, acquisitions_iqr = 0.0;
    double hf_evaluations_median = 0.0;
};

/// Aggregates over successful runs of one mode (quantiles by linear
/// interpolation).
ModeAggregate aggregate(const std::vector<BenchmarkRow>& rows, Mode mode);

struct BenchmarkResult {
    std::vector<BenchmarkRow> rows;
    ModeAggregate sf, mf;
    bool partial_failure = false;
    std::filesystem::path dir;
};

BenchmarkResult cmd_benchmark(const ExperimentConfig& config, const CommandOptions& options);

struct Certification {
    std::uint64_t seed = 0;
    NodeId best_node;
    double distance = 0.0;  ///< geodesic mm from the LF-landscape argmin
    bool certified = false;
};

struct LossMapResult {
    std::vector<double> low_losses;
    NodeId argmin_low;
    NodeId argmin_high;
    double min_loss = 0.0;
    double tolerance = 0.0;
    std::vector<Certification> checks;
    bool all_certified = false;
    std::filesystem::path dir;
};

/// Exhaustive LF loss over every LF node, then certifies the BO result for
/// each spot-check seed (options.seed, else loss_map.seeds).
LossMapResult cmd_loss_map(const ExperimentConfig& config, const CommandOptions& options);

}  // namespace easbo::cli
