#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include "easycore/tensor.hpp"

namespace easycore {

/// Labelled feature matrix. `ids` are stable sample indices that survive
/// subsetting; positions (row numbers) do not.
struct Dataset {
  Tensor features;  // [n x d]
  std::vector<int> labels;
  int class_count = 0;
  std::vector<std::size_t> ids;

  std::size_t size() const { return labels.size(); }
  std::size_t dim() const;
  void validate() const;

  /// Gathers rows by position into a fresh [k x d] tensor.
  Tensor gather_rows(std::span<const std::size_t> positions) const;
  std::vector<int> gather_labels(std::span<const std::size_t> positions) const;
  std::vector<std::size_t> gather_ids(std::span<const std::size_t> positions) const;
};

struct ClusterConfig {
  std::vector<std::array<double, 2>> centers;
  std::vector<std::size_t> train_counts;
  std::vector<std::size_t> test_counts;
  std::vector<double> stds;
  std::vector<int> class_of_cluster;

  /// Six Gaussian clusters, two classes assigned alternately (cluster i -> i mod 2).
  static ClusterConfig six_clusters();
  void validate() const;
  int class_count() const;
};

struct SplitDataset {
  Dataset train;
  Dataset test;
};

/// Cluster i contributes train_counts[i] / test_counts[i] points
/// center + std * N(0, I). Train and test use independent streams.
SplitDataset generate_clusters(const ClusterConfig& config, std::uint64_t seed);

struct CsvOptions {
  bool header = false;
  /// Per-column min-max scaling of features to [0, 1].
  bool minmax = false;
};

Dataset parse_csv_dataset(std::string_view text, const CsvOptions& options = {});
Dataset load_csv_dataset(const std::filesystem::path& path, const CsvOptions& options = {});
/// Writes features then label per row, full round-trip precision, no header.
void write_csv_dataset(const Dataset& data, const std::filesystem::path& path);

/// Rows with the given ids, in the given order. Original ids are kept.
Dataset subset(const Dataset& data, std::span<const std::size_t> ids);

}  // namespace easycore
