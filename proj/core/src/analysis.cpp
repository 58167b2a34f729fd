#include "easycore/analysis.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <string>

#include "easycore/autodiff.hpp"
#include "easycore/error.hpp"
#include "easycore/parallel.hpp"

namespace easycore {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

RowMatrix to_matrix(const Tensor& t) {
  return Eigen::Map<const RowMatrix>(t.values().data(), static_cast<Eigen::Index>(t.rows()),
                                     static_cast<Eigen::Index>(t.cols()));
}

RowMatrix centered(const Tensor& features) {
  RowMatrix x = to_matrix(features);
  const Eigen::RowVectorXd mean = x.colwise().mean();
  x.rowwise() -= mean;
  return x;
}

}  // namespace

GridSpec GridSpec::around(const Dataset& data, double pad, std::size_t resolution) {
  if (data.dim() != 2 || data.size() == 0) throw ValidationError("grid: need a nonempty 2-D dataset");
  auto v = data.features.values();
  double x0 = v[0], x1 = v[0], y0 = v[1], y1 = v[1];
  for (std::size_t i = 0; i < data.size(); ++i) {
    x0 = std::min(x0, v[2 * i]);
    x1 = std::max(x1, v[2 * i]);
    y0 = std::min(y0, v[2 * i + 1]);
    y1 = std::max(y1, v[2 * i + 1]);
  }
  const double px = pad * (x1 - x0), py = pad * (y1 - y0);
  return GridSpec{x0 - px, x1 + px, y0 - py, y1 + py, resolution, resolution};
}

void GridSpec::validate() const {
  if (x_res < 2 || y_res < 2) throw ValidationError("grid resolution must be at least 2 per axis");
  if (!(x_max > x_min) || !(y_max > y_min)) throw ValidationError("grid ranges must have max > min");
}

double GridSpec::x_center(std::size_t ix) const {
  return x_min + (static_cast<double>(ix) + 0.5) * (x_max - x_min) / static_cast<double>(x_res);
}

double GridSpec::y_center(std::size_t iy) const {
  return y_min + (static_cast<double>(iy) + 0.5) * (y_max - y_min) / static_cast<double>(y_res);
}

BoundaryRaster boundary_raster(const Model& model, const GridSpec& grid) {
  grid.validate();
  if (model.config().input_dim != 2) {
    throw ValidationError("boundary raster needs a 2-D input model, got input_dim " +
                          std::to_string(model.config().input_dim));
  }
  BoundaryRaster raster{grid, std::vector<int>(grid.x_res * grid.y_res, 0)};
  parallel_for_shards(grid.y_res, 1, [&](std::size_t begin, std::size_t end) {
    for (std::size_t iy = begin; iy < end; ++iy) {
      std::vector<double> pts(2 * grid.x_res);
      for (std::size_t ix = 0; ix < grid.x_res; ++ix) {
        pts[2 * ix] = grid.x_center(ix);
        pts[2 * ix + 1] = grid.y_center(iy);
      }
      const auto pred = predict(model, Tensor::from({grid.x_res, 2}, std::move(pts)));
      std::copy(pred.begin(), pred.end(), raster.class_grid.begin() + static_cast<std::ptrdiff_t>(iy * grid.x_res));
    }
  });
  return raster;
}

std::size_t boundary_complexity(const BoundaryRaster& raster) {
  const std::size_t nx = raster.grid.x_res, ny = raster.grid.y_res;
  std::size_t edges = 0;
  for (std::size_t iy = 0; iy < ny; ++iy) {
    for (std::size_t ix = 0; ix < nx; ++ix) {
      if (ix + 1 < nx && raster.at(iy, ix) != raster.at(iy, ix + 1)) ++edges;
      if (iy + 1 < ny && raster.at(iy, ix) != raster.at(iy + 1, ix)) ++edges;
    }
  }
  return edges;
}

std::vector<double> explained_variance_ratio(const Tensor& features) {
  if (features.rank() != 2 || features.rows() < 2) throw ValidationError("PCA needs at least 2 samples");
  const RowMatrix x = centered(features);
  Eigen::BDCSVD<Eigen::MatrixXd> svd(x);
  const Eigen::VectorXd s = svd.singularValues();
  std::vector<double> lambda(static_cast<std::size_t>(s.size()));
  for (Eigen::Index i = 0; i < s.size(); ++i) lambda[static_cast<std::size_t>(i)] = s[i] * s[i];
  const double total = std::accumulate(lambda.begin(), lambda.end(), 0.0);
  if (!(total > 0.0)) throw ValidationError("PCA: features have zero total variance");
  for (double& l : lambda) l /= total;
  return lambda;
}

std::size_t pca_kappa(const Tensor& features, double variance_target) {
  if (!(variance_target > 0.0 && variance_target <= 1.0)) {
    throw ValidationError("variance target must be in (0, 1]");
  }
  const auto ratio = explained_variance_ratio(features);
  double cum = 0.0;
  for (std::size_t k = 0; k < ratio.size(); ++k) {
    cum += ratio[k];
    // Slack absorbs summation rounding when the target is exactly 1.
    if (cum >= variance_target - 1e-12) return k + 1;
  }
  return ratio.size();
}

Projection2d pca_project2d(const Tensor& features, std::span<const int> labels) {
  if (features.rank() != 2 || features.rows() < 3) throw ValidationError("2-D projection needs at least 3 samples");
  if (labels.size() != features.rows()) throw ShapeError("projection: label count mismatch");
  const RowMatrix x = centered(features);
  if (!(x.squaredNorm() > 0.0)) throw ValidationError("projection: features have zero variance");

  Eigen::BDCSVD<Eigen::MatrixXd> svd(x, Eigen::ComputeThinV);
  Eigen::MatrixXd axes = Eigen::MatrixXd::Zero(x.cols(), 2);
  const Eigen::Index k = std::min<Eigen::Index>(2, svd.matrixV().cols());
  axes.leftCols(k) = svd.matrixV().leftCols(k);
  for (Eigen::Index c = 0; c < 2; ++c) {
    Eigen::Index arg = 0;
    axes.col(c).cwiseAbs().maxCoeff(&arg);
    if (axes(arg, c) < 0) axes.col(c) *= -1.0;
  }
  const Eigen::MatrixXd proj = x * axes;

  Projection2d out;
  out.coords.resize(static_cast<std::size_t>(proj.rows()));
  for (Eigen::Index i = 0; i < proj.rows(); ++i) out.coords[static_cast<std::size_t>(i)] = {proj(i, 0), proj(i, 1)};

  std::map<int, std::pair<std::array<double, 2>, std::size_t>> acc;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto& [sum, count] = acc[labels[i]];
    sum[0] += out.coords[i][0];
    sum[1] += out.coords[i][1];
    ++count;
  }
  for (const auto& [cls, entry] : acc) {
    out.classes.push_back(cls);
    const auto n = static_cast<double>(entry.second);
    out.centroids.push_back({entry.first[0] / n, entry.first[1] / n});
  }
  return out;
}

std::vector<double> hardness_accuracy_curve(std::span<const std::uint8_t> adv_correct_by_id,
                                            std::span<const std::size_t> order, std::size_t bins) {
  const std::size_t n = order.size();
  if (bins < 2) throw ValidationError("accuracy curve needs at least 2 bins");
  if (bins > n) throw ValidationError("accuracy curve: " + std::to_string(bins) + " bins for " + std::to_string(n) +
                                      " samples");
  const std::size_t width = n / bins;
  std::vector<double> out(bins, 0.0);
  for (std::size_t b = 0; b < bins; ++b) {
    const std::size_t begin = b * width;
    const std::size_t end = b + 1 == bins ? n : begin + width;
    std::size_t hits = 0;
    for (std::size_t i = begin; i < end; ++i) hits += adv_correct_by_id[order[i]] ? 1 : 0;
    out[b] = static_cast<double>(hits) / static_cast<double>(end - begin);
  }
  return out;
}

namespace {

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double rank_correlation(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("rank correlation: length mismatch");
  if (a.size() < 3) throw ValidationError("rank correlation needs at least 3 samples");
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (!(saa > 0.0) || !(sbb > 0.0)) throw ValidationError("rank correlation: an argument has zero variance");
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

double rank_correlation(std::span<const double> scores, std::span<const std::uint8_t> outcomes) {
  std::vector<double> o(outcomes.size());
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = outcomes[i] ? 1.0 : 0.0;
  return rank_correlation(scores, o);
}

Lemma1Report lemma1_check(const Model& model, const Tensor& batch, std::span<const int> labels) {
  if (batch.rank() != 2 || batch.rows() != labels.size()) throw ShapeError("lemma1_check: batch/label mismatch");

  // X^T is [d x B]; its pseudo-inverse is [B x d].
  const RowMatrix x = to_matrix(batch);
  const Eigen::MatrixXd xt = x.transpose();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(xt, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd s = svd.singularValues();
  const double tol = static_cast<double>(std::max(xt.rows(), xt.cols())) * s.maxCoeff() *
                     std::numeric_limits<double>::epsilon();
  Eigen::VectorXd s_inv = Eigen::VectorXd::Zero(s.size());
  for (Eigen::Index i = 0; i < s.size(); ++i)
    if (s[i] > tol) s_inv[i] = 1.0 / s[i];
  const Eigen::MatrixXd pinv = svd.matrixV() * s_inv.asDiagonal() * svd.matrixU().transpose();
  const Eigen::MatrixXd p = xt * pinv;
  const Eigen::VectorXd sp = Eigen::JacobiSVD<Eigen::MatrixXd>(p).singularValues();

  Lemma1Report rep;
  rep.s_p = sp.size() ? sp.minCoeff() : 0.0;
  if (!(rep.s_p > 1e-8)) {
    throw ValidationError("lemma1_check: rank-deficient batch (smallest singular value of P is " +
                          std::to_string(rep.s_p) + ")");
  }
  rep.pinv_norm = pinv.norm();

  Model probe = model.clone();
  probe.zero_grad();
  Tape tape;
  Tensor leaf = Tensor::from(batch.shape(), {batch.values().begin(), batch.values().end()}, true);
  Tensor loss = tape.softmax_cross_entropy(probe.forward(tape, leaf, ParamMode::trainable), labels);
  tape.backward(loss);

  auto sq = [](std::span<const double> v) {
    double acc = 0.0;
    for (double e : v) acc += e * e;
    return acc;
  };
  rep.input_grad_norm = std::sqrt(sq(leaf.grad()));
  double wsq = 0.0;
  for (const auto& g : probe.gradients()) wsq += sq(g);
  rep.weight_grad_norm = std::sqrt(wsq);
  rep.first_layer_norm = std::sqrt(sq(probe.parameters().front().tensor.values()));
  rep.k_g = rep.first_layer_norm * rep.pinv_norm / rep.s_p;
  rep.holds = rep.input_grad_norm <= rep.k_g * rep.weight_grad_norm * (1.0 + 1e-6);
  return rep;
}

Histogram aign_histogram(std::span<const double> scores, std::size_t bins) {
  if (bins < 1) throw ValidationError("histogram needs at least one bin");
  if (scores.empty()) throw ValidationError("histogram of an empty score set");
  const auto [lo_it, hi_it] = std::minmax_element(scores.begin(), scores.end());
  const double lo = *lo_it, hi = *hi_it;
  Histogram h;
  if (!(hi > lo)) {
    h.edges = {lo, lo + 1.0};
    h.densities = {1.0};
    return h;
  }
  const double width = (hi - lo) / static_cast<double>(bins);
  h.edges.resize(bins + 1);
  for (std::size_t b = 0; b <= bins; ++b) h.edges[b] = lo + width * static_cast<double>(b);
  h.edges.back() = hi;
  std::vector<std::size_t> counts(bins, 0);
  for (double s : scores) {
    auto b = static_cast<std::size_t>((s - lo) / width);
    ++counts[std::min(b, bins - 1)];
  }
  h.densities.resize(bins);
  const double n = static_cast<double>(scores.size());
  for (std::size_t b = 0; b < bins; ++b)
    h.densities[b] = static_cast<double>(counts[b]) / (n * (h.edges[b + 1] - h.edges[b]));
  return h;
}

}  // namespace easycore
