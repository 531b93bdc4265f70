#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "easbo/bayes_opt.hpp"
#include "easbo/ecg.hpp"
#include "easbo/eikonal.hpp"
#include "easbo/mesh.hpp"

namespace easbo::cli {

/// Bad or inconsistent configuration (exit code 1).
class ConfigError : public Error {
public:
    using Error::Error;
};

enum class GeometrySource { ellipsoid, icosphere, file };

struct GeometryConfig {
    GeometrySource source = GeometrySource::ellipsoid;
    Vec3 radii{24.0, 12.0, 10.0};
    int frequency = 14;
    FiberRule fiber_rule = FiberRule::azimuthal;
    Vec3 fiber_direction{1.0, 0.0, 0.0};
    std::filesystem::path mesh;
    std::optional<std::filesystem::path> fibers;
    /// Coarse mesh file; when absent the LF mesh is made by coarsening.
    std::optional<std::filesystem::path> low_mesh;
    std::optional<std::filesystem::path> low_fibers;
    double low_coarsen_factor = 2.0;
};

enum class ConvergenceMode { geodesic, exact, none };

struct ExperimentConfig {
    std::filesystem::path path;
    /// 16 hex digits identifying the full configuration.
    std::string hash;
    /// Hash of the sections that determine the preprocessing artifacts.
    std::string preprocess_hash;
    /// preprocess_hash plus the ground-truth settings.
    std::string truth_hash;

    GeometryConfig geometry;

    double v_long = 0.6;
    double v_trans = 0.3;
    EikonalOptions eikonal;

    IntracellularConductivity conductivity;
    ActionPotentialParams action_potential;
    double dt = 1.0;
    double duration_factor = 1.2;
    double electrode_scale = 1.0;

    double smoothness = 2.5;
    std::size_t n_eig = 256;

    BoConfig bo;
    ConvergenceMode convergence = ConvergenceMode::geodesic;
    double tolerance_fraction = 0.05;

    std::optional<std::size_t> truth_node;
    std::optional<Vec3> truth_point;

    std::filesystem::path output_dir;
    std::vector<std::uint64_t> benchmark_seeds;
    std::vector<std::uint64_t> loss_map_seeds;
};

/// Parses an INI file ([section] key = value). Relative paths resolve
/// against the directory of the file. Unknown keys are errors.
ExperimentConfig load_config(const std::filesystem::path& path);
ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& base_dir);

/// "0-19" or "0 1 5" or "3,4".
std::vector<std::uint64_t> parse_seed_list(const std::string& text);

/// FNV-1a 64-bit hash as 16 lowercase hex digits.
std::string fnv1a_hex(const std::string& data);

}  // namespace easbo::cli
