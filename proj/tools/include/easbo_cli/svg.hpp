#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "easbo/mesh.hpp"

namespace easbo::cli {

struct ScatterSeries {
    std::string label;
    std::string color;
    std::vector<double> x, y;
};

struct PlotText {
    std::string title;
    std::string x_label;
    std::string y_label;
    /// Emitted as an XML comment at the top of the file.
    std::string metadata;
};

void write_scatter_svg(const std::vector<ScatterSeries>& series, const PlotText& text, bool log_y,
                       const std::filesystem::path& path);

struct BoxGroup {
    std::string label;
    std::vector<double> values;
};

void write_boxplot_svg(const std::vector<BoxGroup>& groups, const PlotText& text, const std::filesystem::path& path);

struct Marker {
    NodeId node;
    std::string color;
    std::string label;
};

/// Surface colored by a per-node field, unrolled into (angle around the
/// longest bounding-box axis, position along it). Triangles that straddle
/// the angular seam are dropped.
void write_surface_svg(const SimplicialMesh& mesh, const std::vector<double>& values, const std::vector<Marker>& markers,
                       const PlotText& text, const std::filesystem::path& path);

/// Quantile with linear interpolation between order statistics (type 7).
double quantile(std::vector<double> values, double q);

}  // namespace easbo::cli
