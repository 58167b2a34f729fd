#pragma once

#include <filesystem>
#include <span>
#include <string>

#include "easycore/analysis.hpp"
#include "easycore/data.hpp"

namespace easycore {

/// Class heatmap, optionally overlaid with the points of a 2-D dataset.
void write_raster_svg(const BoundaryRaster& raster, const Dataset* points, const std::filesystem::path& path);

/// Polyline of `values` against their index.
void write_curve_svg(std::span<const double> values, const std::string& title, const std::filesystem::path& path);

void write_histogram_svg(const Histogram& hist, const std::string& title, const std::filesystem::path& path);

/// Scatter of projected points coloured by class.
void write_projection_svg(const Projection2d& proj, std::span<const int> labels, const std::filesystem::path& path);

}  // namespace easycore
