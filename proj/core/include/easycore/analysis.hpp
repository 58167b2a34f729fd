#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "easycore/data.hpp"
#include "easycore/model.hpp"

namespace easycore {

struct GridSpec {
  double x_min = -1.0, x_max = 1.0;
  double y_min = -1.0, y_max = 1.0;
  std::size_t x_res = 400, y_res = 400;

  /// Bounding box of a 2-D dataset padded by `pad` of its extent per side.
  static GridSpec around(const Dataset& data, double pad = 0.1, std::size_t resolution = 400);
  void validate() const;
  double x_center(std::size_t ix) const;
  double y_center(std::size_t iy) const;
};

/// Predicted class per cell centre; row-major with rows along y.
struct BoundaryRaster {
  GridSpec grid;
  std::vector<int> class_grid;

  int at(std::size_t iy, std::size_t ix) const { return class_grid[iy * grid.x_res + ix]; }
};

BoundaryRaster boundary_raster(const Model& model, const GridSpec& grid);

/// Number of 4-neighbour cell pairs whose predicted classes differ.
std::size_t boundary_complexity(const BoundaryRaster& raster);

/// Smallest k whose top-k covariance eigenvalues explain `variance_target`
/// of the total variance. Rows are samples.
std::size_t pca_kappa(const Tensor& features, double variance_target);

/// Fraction of variance explained by each principal component, descending.
std::vector<double> explained_variance_ratio(const Tensor& features);

struct Projection2d {
  std::vector<std::array<double, 2>> coords;
  std::vector<int> classes;  // ascending
  std::vector<std::array<double, 2>> centroids;
};

/// Projection onto the top two principal axes (axis sign fixed so the largest
/// loading is positive), with per-class centroids in projected space.
Projection2d pca_project2d(const Tensor& features, std::span<const int> labels);

/// Ordered ids split into `bins` contiguous groups of n / bins (remainder to
/// the last); mean of the adv-correct flag per group. Flags are indexed by id.
std::vector<double> hardness_accuracy_curve(std::span<const std::uint8_t> adv_correct_by_id,
                                            std::span<const std::size_t> order, std::size_t bins);

/// Spearman correlation with average ranks for ties.
double rank_correlation(std::span<const double> a, std::span<const double> b);
double rank_correlation(std::span<const double> scores, std::span<const std::uint8_t> outcomes);

struct Lemma1Report {
  double input_grad_norm = 0.0;   // ||grad_X loss||_F
  double weight_grad_norm = 0.0;  // ||grad_w loss||_F over all parameters
  double first_layer_norm = 0.0;  // ||W^(1)||_F
  double pinv_norm = 0.0;         // ||(X^T)^+||_F
  double s_p = 0.0;               // smallest singular value of X^T (X^T)^+
  double k_g = 0.0;
  bool holds = false;
};

/// Checks ||grad_X l||_F <= k_g ||grad_w l||_F (1 + 1e-6) on one batch, with
/// k_g = ||W^(1)||_F ||(X^T)^+||_F / s_P, X = batch [B x d] and
/// P = X^T (X^T)^+ [d x d]. Throws when s_P <= 1e-8 (batch rank below d).
Lemma1Report lemma1_check(const Model& model, const Tensor& batch, std::span<const int> labels);

struct Histogram {
  std::vector<double> edges;      // bins + 1
  std::vector<double> densities;  // bins, sum(density * width) == 1
};

/// Equal-width bins over [min, max]. Constant input collapses to one bin of
/// width 1 starting at the value, density 1.
Histogram aign_histogram(std::span<const double> scores, std::size_t bins);

}  // namespace easycore
