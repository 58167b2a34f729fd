#include "easycore/svg.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <sstream>

#include "easycore/error.hpp"

namespace easycore {

namespace {

constexpr std::array<const char*, 8> kPalette = {"#4e79a7", "#f28e2b", "#59a14f", "#e15759",
                                                  "#76b7b2", "#edc948", "#b07aa1", "#9c755f"};
constexpr std::array<const char*, 8> kLight = {"#c6d4e5", "#fbd7b5", "#cde3c9", "#f5c5c6",
                                                "#d3e9e7", "#f8ecc0", "#e3d1df", "#dccfc4"};

const char* color(int cls, bool light = false) {
  const auto i = static_cast<std::size_t>(std::abs(cls)) % kPalette.size();
  return light ? kLight[i] : kPalette[i];
}

void write_file(const std::filesystem::path& path, const std::string& body) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << body;
  if (!out) throw IoError("failed writing " + path.string());
}

constexpr double kSize = 480.0;
constexpr double kMargin = 40.0;

std::string header(double w, double h) {
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\" viewBox=\"0 0 " << w
    << ' ' << h << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  return s.str();
}

}  // namespace

void write_raster_svg(const BoundaryRaster& raster, const Dataset* points, const std::filesystem::path& path) {
  const auto& g = raster.grid;
  const double cw = kSize / static_cast<double>(g.x_res);
  const double ch = kSize / static_cast<double>(g.y_res);
  std::ostringstream s;
  s << header(kSize, kSize);
  // Runs of equal class per row keep the file small.
  for (std::size_t iy = 0; iy < g.y_res; ++iy) {
    const double y = kSize - static_cast<double>(iy + 1) * ch;
    for (std::size_t ix = 0; ix < g.x_res;) {
      std::size_t end = ix;
      while (end < g.x_res && raster.at(iy, end) == raster.at(iy, ix)) ++end;
      s << "<rect x=\"" << static_cast<double>(ix) * cw << "\" y=\"" << y << "\" width=\""
        << static_cast<double>(end - ix) * cw << "\" height=\"" << ch << "\" fill=\"" << color(raster.at(iy, ix), true)
        << "\"/>\n";
      ix = end;
    }
  }
  if (points && points->dim() == 2) {
    auto v = points->features.values();
    for (std::size_t i = 0; i < points->size(); ++i) {
      const double px = (v[2 * i] - g.x_min) / (g.x_max - g.x_min) * kSize;
      const double py = kSize - (v[2 * i + 1] - g.y_min) / (g.y_max - g.y_min) * kSize;
      s << "<circle cx=\"" << px << "\" cy=\"" << py << "\" r=\"2\" fill=\"" << color(points->labels[i]) << "\"/>\n";
    }
  }
  s << "</svg>\n";
  write_file(path, s.str());
}

void write_curve_svg(std::span<const double> values, const std::string& title, const std::filesystem::path& path) {
  if (values.empty()) throw ValidationError("curve svg: no values");
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  double lo = std::min(0.0, *lo_it), hi = std::max(1.0, *hi_it);
  const double w = kSize + 2 * kMargin, h = kSize + 2 * kMargin;
  const double step = values.size() > 1 ? kSize / static_cast<double>(values.size() - 1) : 0.0;
  std::ostringstream s;
  s << header(w, h);
  s << "<text x=\"" << kMargin << "\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\">" << title << "</text>\n";
  s << "<polyline fill=\"none\" stroke=\"#4e79a7\" stroke-width=\"2\" points=\"";
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double x = kMargin + static_cast<double>(i) * step;
    const double y = kMargin + kSize - (values[i] - lo) / (hi - lo) * kSize;
    s << x << ',' << y << ' ';
  }
  s << "\"/>\n<rect x=\"" << kMargin << "\" y=\"" << kMargin << "\" width=\"" << kSize << "\" height=\"" << kSize
    << "\" fill=\"none\" stroke=\"black\"/>\n</svg>\n";
  write_file(path, s.str());
}

void write_histogram_svg(const Histogram& hist, const std::string& title, const std::filesystem::path& path) {
  if (hist.densities.empty()) throw ValidationError("histogram svg: no bins");
  const double peak = *std::max_element(hist.densities.begin(), hist.densities.end());
  const double lo = hist.edges.front(), hi = hist.edges.back();
  const double w = kSize + 2 * kMargin, h = kSize + 2 * kMargin;
  std::ostringstream s;
  s << header(w, h);
  s << "<text x=\"" << kMargin << "\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\">" << title << "</text>\n";
  for (std::size_t b = 0; b < hist.densities.size(); ++b) {
    const double x0 = kMargin + (hist.edges[b] - lo) / (hi - lo) * kSize;
    const double x1 = kMargin + (hist.edges[b + 1] - lo) / (hi - lo) * kSize;
    const double bh = peak > 0 ? hist.densities[b] / peak * kSize : 0.0;
    s << "<rect x=\"" << x0 << "\" y=\"" << kMargin + kSize - bh << "\" width=\"" << x1 - x0 << "\" height=\"" << bh
      << "\" fill=\"#4e79a7\" stroke=\"white\"/>\n";
  }
  s << "</svg>\n";
  write_file(path, s.str());
}

void write_projection_svg(const Projection2d& proj, std::span<const int> labels, const std::filesystem::path& path) {
  if (proj.coords.empty()) throw ValidationError("projection svg: no points");
  double x0 = proj.coords[0][0], x1 = x0, y0 = proj.coords[0][1], y1 = y0;
  for (const auto& c : proj.coords) {
    x0 = std::min(x0, c[0]);
    x1 = std::max(x1, c[0]);
    y0 = std::min(y0, c[1]);
    y1 = std::max(y1, c[1]);
  }
  if (!(x1 > x0)) x1 = x0 + 1.0;
  if (!(y1 > y0)) y1 = y0 + 1.0;
  const double w = kSize + 2 * kMargin;
  auto sx = [&](double x) { return kMargin + (x - x0) / (x1 - x0) * kSize; };
  auto sy = [&](double y) { return kMargin + kSize - (y - y0) / (y1 - y0) * kSize; };
  std::ostringstream s;
  s << header(w, w);
  for (std::size_t i = 0; i < proj.coords.size(); ++i) {
    const int cls = i < labels.size() ? labels[i] : 0;
    s << "<circle cx=\"" << sx(proj.coords[i][0]) << "\" cy=\"" << sy(proj.coords[i][1]) << "\" r=\"2\" fill=\""
      << color(cls) << "\"/>\n";
  }
  for (std::size_t c = 0; c < proj.centroids.size(); ++c) {
    s << "<circle cx=\"" << sx(proj.centroids[c][0]) << "\" cy=\"" << sy(proj.centroids[c][1])
      << "\" r=\"6\" fill=\"none\" stroke=\"black\" stroke-width=\"2\"/>\n";
  }
  s << "</svg>\n";
  write_file(path, s.str());
}

}  // namespace easycore
