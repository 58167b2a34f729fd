#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "easycore/analysis.hpp"
#include "easycore/error.hpp"
#include "easycore/rng.hpp"
#include "easycore/svg.hpp"

using namespace easycore;

namespace {

void assign(Model& m, const std::string& name, std::vector<double> v) {
  for (auto& p : m.parameters())
    if (p.name == name) std::copy(v.begin(), v.end(), p.tensor.mutable_values().begin());
}

// Class 1 where x > 0.
Model vertical_split() {
  Model m = build_model(ModelConfig{2, 1, 0, 2}, 0);
  assign(m, "input.weight", {1.0, 0.0});
  assign(m, "input.bias", {0.0});
  assign(m, "head.weight", {0.0, 1.0});
  assign(m, "head.bias", {0.0, 0.0});
  return m;
}

BoundaryRaster make_raster(std::size_t r, const std::function<int(std::size_t, std::size_t)>& cls) {
  BoundaryRaster raster{GridSpec{-1, 1, -1, 1, r, r}, std::vector<int>(r * r)};
  for (std::size_t iy = 0; iy < r; ++iy)
    for (std::size_t ix = 0; ix < r; ++ix) raster.class_grid[iy * r + ix] = cls(iy, ix);
  return raster;
}

Tensor gaussian(CounterRng& rng, std::size_t n, std::size_t d, std::vector<double> scales = {}) {
  std::vector<double> v(n * d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) v[i * d + j] = (scales.empty() ? 1.0 : scales[j]) * rng.normal();
  return Tensor::from({n, d}, std::move(v));
}

Tensor rotate_and_shift(const Tensor& x, double angle, double shift) {
  // Givens rotation in the (0, 1) plane plus a constant offset.
  std::vector<double> v(x.values().begin(), x.values().end());
  const std::size_t d = x.cols();
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const double a = v[i * d], b = v[i * d + 1];
    v[i * d] = std::cos(angle) * a - std::sin(angle) * b;
    v[i * d + 1] = std::sin(angle) * a + std::cos(angle) * b;
    for (std::size_t j = 0; j < d; ++j) v[i * d + j] += shift;
  }
  return Tensor::from(x.shape(), std::move(v));
}

}  // namespace

TEST(Grid, ValidationAndCenters) {
  GridSpec g{-1, 1, -1, 1, 4, 2};
  EXPECT_DOUBLE_EQ(g.x_center(0), -0.75);
  EXPECT_DOUBLE_EQ(g.y_center(1), 0.5);
  EXPECT_THROW((GridSpec{-1, 1, -1, 1, 1, 4}.validate()), ValidationError);
  EXPECT_THROW((GridSpec{1, -1, -1, 1, 4, 4}.validate()), ValidationError);
}

TEST(Grid, AroundPadsBoundingBox) {
  const Dataset d = parse_csv_dataset("0,0,0\n10,4,1\n");
  const GridSpec g = GridSpec::around(d, 0.1, 50);
  EXPECT_DOUBLE_EQ(g.x_min, -1.0);
  EXPECT_DOUBLE_EQ(g.x_max, 11.0);
  EXPECT_DOUBLE_EQ(g.y_min, -0.4);
  EXPECT_DOUBLE_EQ(g.y_max, 4.4);
  EXPECT_EQ(g.x_res, 50u);
}

TEST(Boundary, VerticalSplitHalves) {
  const auto raster = boundary_raster(vertical_split(), GridSpec{-1, 1, -1, 1, 10, 6});
  ASSERT_EQ(raster.class_grid.size(), 60u);
  for (std::size_t iy = 0; iy < 6; ++iy)
    for (std::size_t ix = 0; ix < 10; ++ix) EXPECT_EQ(raster.at(iy, ix), ix < 5 ? 0 : 1);
  EXPECT_EQ(boundary_complexity(raster), 6u);
}

TEST(Boundary, ConstantModelHasNoEdges) {
  Model m = build_model(ModelConfig{2, 4, 1, 3}, 0);
  for (auto& p : m.parameters())
    for (double& v : p.tensor.mutable_values()) v = 0.0;
  const auto raster = boundary_raster(m, GridSpec{-1, 1, -1, 1, 20, 20});
  for (int c : raster.class_grid) EXPECT_EQ(c, 0);
  EXPECT_EQ(boundary_complexity(raster), 0u);
}

TEST(Boundary, NonPlanarModelRejected) {
  EXPECT_THROW(boundary_raster(build_model(ModelConfig{3, 4, 1, 2}, 0), GridSpec{}), ValidationError);
}

TEST(Boundary, RasterIsDeterministic) {
  const Model m = build_model(ModelConfig{2, 16, 3, 2}, 4);
  const GridSpec g{-3, 3, -3, 3, 64, 64};
  EXPECT_EQ(boundary_raster(m, g).class_grid, boundary_raster(m, g).class_grid);
}

TEST(Complexity, CheckerboardIsMaximal) {
  for (std::size_t r : {2u, 5u, 16u}) {
    const auto raster = make_raster(r, [](std::size_t iy, std::size_t ix) { return static_cast<int>((iy + ix) % 2); });
    EXPECT_EQ(boundary_complexity(raster), 2 * r * (r - 1));
  }
}

TEST(Complexity, HalfPlaneSeamHasOneEdgePerRow) {
  const std::size_t r = 40;
  const auto raster = make_raster(r, [&](std::size_t, std::size_t ix) { return ix < r / 3 ? 0 : 1; });
  EXPECT_EQ(boundary_complexity(raster), r);
}

TEST(Complexity, InvariantUnderRelabeling) {
  CounterRng rng(1);
  const auto raster = make_raster(30, [&](std::size_t, std::size_t) { return static_cast<int>(rng.below(3)); });
  BoundaryRaster relabeled = raster;
  for (int& c : relabeled.class_grid) c = (c + 1) % 3 * 7;
  EXPECT_EQ(boundary_complexity(relabeled), boundary_complexity(raster));
}

TEST(Kappa, RankOneIsOne) {
  CounterRng rng(2);
  std::vector<double> v;
  for (int i = 0; i < 50; ++i) {
    const double t = rng.normal();
    for (double dir : {1.0, -2.0, 0.5, 3.0}) v.push_back(t * dir + 7.0);
  }
  const Tensor x = Tensor::from({50, 4}, v);
  for (double target : {0.5, 0.95, 0.999, 1.0}) EXPECT_EQ(pca_kappa(x, target), 1u);
}

TEST(Kappa, IsotropicGaussianNeedsAllDimensions) {
  CounterRng rng(3);
  const Tensor x = gaussian(rng, 10000, 10);
  const auto ratio = explained_variance_ratio(x);
  for (double r : ratio) EXPECT_NEAR(r, 0.1, 0.02);
  EXPECT_EQ(pca_kappa(x, 0.95), 10u);
}

TEST(Kappa, KnownSpectrum) {
  CounterRng rng(4);
  // Variances 100, 25, 1, 0.01: cumulative ratios ~0.79, 0.99, ...
  const Tensor x = gaussian(rng, 20000, 4, {10.0, 5.0, 1.0, 0.1});
  EXPECT_EQ(pca_kappa(x, 0.5), 1u);
  EXPECT_EQ(pca_kappa(x, 0.95), 2u);
  EXPECT_EQ(pca_kappa(x, 0.999), 3u);
}

TEST(Kappa, MonotoneInTarget) {
  CounterRng rng(5);
  const Tensor x = gaussian(rng, 300, 8, {5, 4, 3, 2, 1, 0.5, 0.25, 0.1});
  std::size_t prev = 0;
  for (double t = 0.05; t <= 1.0; t += 0.05) {
    const std::size_t k = pca_kappa(x, t);
    EXPECT_GE(k, prev);
    prev = k;
  }
}

TEST(Kappa, InvariantUnderRotationAndOffset) {
  CounterRng rng(6);
  const Tensor x = gaussian(rng, 500, 5, {3, 2, 1, 0.5, 0.2});
  const Tensor y = rotate_and_shift(x, 0.7, 42.0);
  for (double t : {0.6, 0.8, 0.95, 0.99}) EXPECT_EQ(pca_kappa(y, t), pca_kappa(x, t));
}

TEST(Kappa, Errors) {
  EXPECT_THROW(pca_kappa(Tensor::from({3, 2}, {1, 1, 1, 1, 1, 1}), 0.95), ValidationError);
  EXPECT_THROW(pca_kappa(Tensor::from({1, 2}, {1, 2}), 0.95), ValidationError);
  CounterRng rng(7);
  const Tensor x = gaussian(rng, 10, 3);
  EXPECT_THROW(pca_kappa(x, 0.0), ValidationError);
  EXPECT_THROW(pca_kappa(x, 1.5), ValidationError);
}

TEST(Projection, CollinearPointsHaveFlatSecondAxis) {
  std::vector<double> v;
  for (int i = 0; i < 20; ++i) {
    const double t = i * 0.3 - 2.0;
    v.insert(v.end(), {t, 2 * t, -t});
  }
  const auto proj = pca_project2d(Tensor::from({20, 3}, v), std::vector<int>(20, 0));
  for (const auto& c : proj.coords) EXPECT_NEAR(c[1], 0.0, 1e-9);
}

TEST(Projection, SeparatedClustersHaveDistantCentroids) {
  CounterRng rng(8);
  std::vector<double> v;
  std::vector<int> labels;
  for (int i = 0; i < 200; ++i) {
    const int c = i % 2;
    for (int j = 0; j < 6; ++j) v.push_back(rng.normal() + (c == 0 ? -5.0 : 5.0) * (j == 2 ? 1.0 : 0.0));
    labels.push_back(c);
  }
  const auto proj = pca_project2d(Tensor::from({200, 6}, v), labels);
  ASSERT_EQ(proj.classes, (std::vector<int>{0, 1}));
  const double dx = proj.centroids[0][0] - proj.centroids[1][0];
  const double dy = proj.centroids[0][1] - proj.centroids[1][1];
  const double between = std::hypot(dx, dy);
  double spread = 0.0;
  for (std::size_t i = 0; i < proj.coords.size(); ++i) {
    const auto& ctr = proj.centroids[static_cast<std::size_t>(labels[i])];
    spread = std::max(spread, std::hypot(proj.coords[i][0] - ctr[0], proj.coords[i][1] - ctr[1]));
  }
  EXPECT_GT(between, spread);
}

TEST(Projection, NeverExpandsDistances) {
  CounterRng rng(9);
  const Tensor x = gaussian(rng, 60, 5, {3, 1, 2, 0.5, 4});
  const auto proj = pca_project2d(x, std::vector<int>(60, 0));
  for (std::size_t i = 0; i < 60; ++i)
    for (std::size_t j = i + 1; j < 60; ++j) {
      double d2 = 0.0;
      for (std::size_t k = 0; k < 5; ++k) d2 += std::pow(x.at(i, k) - x.at(j, k), 2);
      const double p = std::hypot(proj.coords[i][0] - proj.coords[j][0], proj.coords[i][1] - proj.coords[j][1]);
      EXPECT_LE(p, std::sqrt(d2) + 1e-9);
    }
}

TEST(Projection, Errors) {
  EXPECT_THROW(pca_project2d(Tensor::from({2, 2}, {0, 1, 1, 0}), std::vector<int>{0, 1}), ValidationError);
  EXPECT_THROW(pca_project2d(Tensor::from({3, 1}, {1, 1, 1}), std::vector<int>{0, 0, 0}), ValidationError);
}

TEST(Curve, AllCorrectIsOnes) {
  std::vector<std::uint8_t> flags(100, 1);
  std::vector<std::size_t> order(100);
  std::iota(order.begin(), order.end(), 0u);
  for (double b : hardness_accuracy_curve(flags, order, 7)) EXPECT_EQ(b, 1.0);
}

TEST(Curve, FirstHalfCorrect) {
  const std::size_t n = 50;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0u);
  CounterRng rng(10);
  for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);
  std::vector<std::uint8_t> flags(n, 0);
  for (std::size_t k = 0; k < n / 2; ++k) flags[order[k]] = 1;
  EXPECT_EQ(hardness_accuracy_curve(flags, order, 2), (std::vector<double>{1.0, 0.0}));
}

TEST(Curve, MatchesGroupByOracleAndWeightedMean) {
  CounterRng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 20 + rng.below(300);
    const std::size_t bins = 2 + rng.below(10);
    std::vector<std::uint8_t> flags(n);
    for (auto& f : flags) f = static_cast<std::uint8_t>(rng.below(2));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0u);
    for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);
    const auto curve = hardness_accuracy_curve(flags, order, bins);
    ASSERT_EQ(curve.size(), bins);

    const std::size_t width = n / bins;
    std::vector<double> hits(bins, 0.0), sizes(bins, 0.0);
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t b = std::min(k / width, bins - 1);
      hits[b] += flags[order[k]];
      sizes[b] += 1.0;
    }
    double weighted = 0.0;
    for (std::size_t b = 0; b < bins; ++b) {
      EXPECT_DOUBLE_EQ(curve[b], hits[b] / sizes[b]);
      weighted += curve[b] * sizes[b];
    }
    const double overall = std::accumulate(flags.begin(), flags.end(), 0.0) / static_cast<double>(n);
    EXPECT_NEAR(weighted / static_cast<double>(n), overall, 1e-12);
  }
}

TEST(Curve, Errors) {
  std::vector<std::uint8_t> flags(5, 1);
  std::vector<std::size_t> order{0, 1, 2, 3, 4};
  EXPECT_THROW(hardness_accuracy_curve(flags, order, 1), ValidationError);
  EXPECT_THROW(hardness_accuracy_curve(flags, order, 6), ValidationError);
}

TEST(Spearman, MedianIndicatorClosedForm) {
  // Distinct scores, outcome = 1 below the median: rho = -sqrt(3) n / (2 sqrt(n^2 - 1)).
  const std::size_t n = 100;
  CounterRng rng(12);
  std::vector<double> scores(n);
  for (std::size_t i = 0; i < n; ++i) scores[i] = static_cast<double>(i) + rng.uniform(0.0, 0.5);
  std::vector<std::uint8_t> outcomes(n);
  for (std::size_t i = 0; i < n; ++i) outcomes[i] = i < n / 2 ? 1 : 0;
  const double expected = -std::sqrt(3.0) * n / (2.0 * std::sqrt(n * n - 1.0));
  EXPECT_NEAR(rank_correlation(scores, outcomes), expected, 1e-12);
  EXPECT_NEAR(expected, -0.866, 1e-3);
}

TEST(Spearman, IncreasingRealOutcomesGiveOne) {
  std::vector<double> a{1, 3, 2, 5, 4}, b{10, 30, 20, 50, 40};
  EXPECT_NEAR(rank_correlation(a, b), 1.0, 1e-15);
  std::vector<double> c{50, 30, 40, 10, 20};
  EXPECT_NEAR(rank_correlation(a, c), -1.0, 1e-15);
}

TEST(Spearman, AverageRanksForTies) {
  // Pearson on average ranks computed by hand: a ranks (1.5, 1.5, 3, 4), b ranks (1, 2, 3, 4).
  std::vector<double> a{1, 1, 2, 3}, b{1, 2, 3, 4};
  const double ra[] = {1.5, 1.5, 3, 4}, rb[] = {1, 2, 3, 4};
  double sab = 0, saa = 0, sbb = 0;
  for (int i = 0; i < 4; ++i) {
    sab += (ra[i] - 2.5) * (rb[i] - 2.5);
    saa += (ra[i] - 2.5) * (ra[i] - 2.5);
    sbb += (rb[i] - 2.5) * (rb[i] - 2.5);
  }
  EXPECT_NEAR(rank_correlation(a, b), sab / std::sqrt(saa * sbb), 1e-15);
}

TEST(Spearman, IndependentOutcomesAreSmall) {
  const std::size_t n = 400;
  int within = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    CounterRng rng(derive_seed(seed, "spearman"));
    std::vector<double> s(n);
    std::vector<std::uint8_t> o(n);
    for (auto& v : s) v = rng.uniform();
    for (auto& v : o) v = static_cast<std::uint8_t>(rng.below(2));
    within += std::abs(rank_correlation(s, o)) <= 3.0 / std::sqrt(static_cast<double>(n));
  }
  EXPECT_GE(within, 97);
}

TEST(Spearman, Errors) {
  EXPECT_THROW(rank_correlation(std::vector<double>{1, 2}, std::vector<double>{1, 2}), ValidationError);
  EXPECT_THROW(rank_correlation(std::vector<double>{1, 2, 3}, std::vector<double>{1, 1, 1}), ValidationError);
  EXPECT_THROW(rank_correlation(std::vector<double>{1, 2, 3}, std::vector<double>{1, 2}), ShapeError);
}

TEST(GradientNormBound, ProjectorOfFullRankBatchIsIdentity) {
  CounterRng rng(13);
  const Model m = build_model(ModelConfig{2, 16, 2, 2}, 13);
  const Tensor batch = gaussian(rng, 8, 2);
  const auto rep = lemma1_check(m, batch, std::vector<int>{0, 1, 0, 1, 1, 0, 0, 1});
  EXPECT_NEAR(rep.s_p, 1.0, 1e-12);
  EXPECT_GT(rep.k_g, 0.0);
  EXPECT_TRUE(rep.holds);
}

TEST(GradientNormBound, HoldsOnSeededRandomPairs) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    CounterRng rng(derive_seed(seed, "lemma1"));
    const ModelConfig cfg{2 + rng.below(3), 4 + rng.below(12), rng.below(4), 2 + rng.below(3)};
    const Model m = build_model(cfg, seed);
    const std::size_t b = cfg.input_dim + rng.below(8);
    const Tensor batch = gaussian(rng, b, cfg.input_dim);
    std::vector<int> y(b);
    for (int& v : y) v = static_cast<int>(rng.below(cfg.num_classes));
    const auto rep = lemma1_check(m, batch, y);
    EXPECT_TRUE(rep.holds) << "seed " << seed << ": " << rep.input_grad_norm << " > " << rep.k_g << " * "
                           << rep.weight_grad_norm;
  }
}

TEST(GradientNormBound, ZeroLossHoldsTrivially) {
  Model m = build_model(ModelConfig{2, 3, 1, 2}, 0);
  for (auto& p : m.parameters())
    for (double& v : p.tensor.mutable_values()) v = 0.0;
  assign(m, "head.bias", {800.0, 0.0});  // softmax saturates: loss and gradients underflow to 0
  const auto rep = lemma1_check(m, Tensor::from({3, 2}, {1, 0, 0, 1, 1, 1}), std::vector<int>{0, 0, 0});
  EXPECT_EQ(rep.input_grad_norm, 0.0);
  EXPECT_EQ(rep.weight_grad_norm, 0.0);
  EXPECT_TRUE(rep.holds);
}

TEST(GradientNormBound, RankDeficientBatchRejected) {
  const Model m = build_model(ModelConfig{2, 4, 1, 2}, 0);
  EXPECT_THROW(lemma1_check(m, Tensor::from({3, 2}, {1, 2, 2, 4, -1, -2}), std::vector<int>{0, 1, 0}),
               ValidationError);
  EXPECT_THROW(lemma1_check(m, Tensor::from({1, 2}, {1, 2}), std::vector<int>{0}), ValidationError);
}

TEST(Histogram, ConstantScoresGiveSingleSpike) {
  const auto h = aign_histogram(std::vector<double>{2.5, 2.5, 2.5}, 10);
  EXPECT_EQ(h.edges, (std::vector<double>{2.5, 3.5}));
  EXPECT_EQ(h.densities, (std::vector<double>{1.0}));
}

TEST(Histogram, IntegratesToOne) {
  CounterRng rng(14);
  std::vector<double> s(5000);
  for (double& v : s) v = std::exp(rng.normal());
  for (std::size_t bins : {1u, 7u, 50u}) {
    const auto h = aign_histogram(s, bins);
    ASSERT_EQ(h.edges.size(), bins + 1);
    double integral = 0.0;
    for (std::size_t b = 0; b < bins; ++b) integral += h.densities[b] * (h.edges[b + 1] - h.edges[b]);
    EXPECT_NEAR(integral, 1.0, 1e-9);
  }
}

TEST(Histogram, UniformScoresAreFlat) {
  CounterRng rng(15);
  const std::size_t n = 100000, bins = 20;
  std::vector<double> s(n);
  for (double& v : s) v = rng.uniform();
  const auto h = aign_histogram(s, bins);
  const double width = h.edges[1] - h.edges[0];
  const double p = 1.0 / bins;
  const double sigma = std::sqrt(n * p * (1 - p)) / (n * width);
  for (double d : h.densities) EXPECT_NEAR(d, 1.0 / (bins * width), 5 * sigma);
}

TEST(Histogram, Errors) {
  EXPECT_THROW(aign_histogram(std::vector<double>{}, 3), ValidationError);
  EXPECT_THROW(aign_histogram(std::vector<double>{1, 2}, 0), ValidationError);
}

TEST(Svg, WritersProduceFiles) {
  const auto dir = std::filesystem::temp_directory_path() / "easycore_svg";
  std::filesystem::create_directories(dir);
  const auto raster = boundary_raster(vertical_split(), GridSpec{-1, 1, -1, 1, 8, 8});
  const Dataset pts = parse_csv_dataset("-0.5,0.2,0\n0.5,-0.1,1\n");
  write_raster_svg(raster, &pts, dir / "r.svg");
  write_curve_svg(std::vector<double>{0.9, 0.5, 0.1}, "curve", dir / "c.svg");
  write_histogram_svg(aign_histogram(std::vector<double>{1, 2, 2, 3}, 3), "hist", dir / "h.svg");
  for (const char* f : {"r.svg", "c.svg", "h.svg"}) {
    ASSERT_TRUE(std::filesystem::exists(dir / f));
    EXPECT_GT(std::filesystem::file_size(dir / f), 100u);
  }
  std::filesystem::remove_all(dir);
}
