#include "easycore/data.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>

#include "easycore/error.hpp"
#include "easycore/rng.hpp"

namespace easycore {

std::size_t Dataset::dim() const { return features.defined() && features.rank() == 2 ? features.shape()[1] : 0; }

void Dataset::validate() const {
  if (features.rank() != 2 || features.shape()[0] != labels.size() || ids.size() != labels.size()) {
    throw ShapeError("dataset features/labels/ids disagree in length");
  }
  for (int y : labels)
    if (y < 0 || y >= class_count) throw ValidationError("label " + std::to_string(y) + " outside class range");
}

Tensor Dataset::gather_rows(std::span<const std::size_t> positions) const {
  const std::size_t d = dim();
  std::vector<double> out(positions.size() * d);
  auto src = features.values();
  for (std::size_t i = 0; i < positions.size(); ++i)
    std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(positions[i] * d), d,
                out.begin() + static_cast<std::ptrdiff_t>(i * d));
  return Tensor::from({positions.size(), d}, std::move(out));
}

std::vector<int> Dataset::gather_labels(std::span<const std::size_t> positions) const {
  std::vector<int> out(positions.size());
  for (std::size_t i = 0; i < positions.size(); ++i) out[i] = labels[positions[i]];
  return out;
}

std::vector<std::size_t> Dataset::gather_ids(std::span<const std::size_t> positions) const {
  std::vector<std::size_t> out(positions.size());
  for (std::size_t i = 0; i < positions.size(); ++i) out[i] = ids[positions[i]];
  return out;
}

ClusterConfig ClusterConfig::six_clusters() {
  ClusterConfig c;
  c.centers = {{-12, 0}, {-6, 0}, {-6, -12}, {0, 12}, {0, 0}, {6, 0}};
  c.train_counts = {100, 100, 400, 400, 100, 100};
  c.test_counts = {250, 250, 1000, 1000, 250, 250};
  c.stds = {2.3, 2.3, 4.6, 4.6, 2.3, 2.3};
  c.class_of_cluster.resize(c.centers.size());
  for (std::size_t i = 0; i < c.centers.size(); ++i) c.class_of_cluster[i] = static_cast<int>(i % 2);
  return c;
}

void ClusterConfig::validate() const {
  const std::size_t n = centers.size();
  if (n == 0) throw ValidationError("cluster config has no clusters");
  if (train_counts.size() != n || test_counts.size() != n || stds.size() != n || class_of_cluster.size() != n) {
    throw ValidationError("cluster config lists differ in length: centers " + std::to_string(n) + ", train_counts " +
                          std::to_string(train_counts.size()) + ", test_counts " +
                          std::to_string(test_counts.size()) + ", stds " + std::to_string(stds.size()) +
                          ", class_of_cluster " + std::to_string(class_of_cluster.size()));
  }
  for (double s : stds)
    if (!(s >= 0.0)) throw ValidationError("cluster std must be nonnegative");
  for (int c : class_of_cluster)
    if (c < 0) throw ValidationError("cluster class index must be nonnegative");
}

int ClusterConfig::class_count() const {
  return class_of_cluster.empty() ? 0 : *std::max_element(class_of_cluster.begin(), class_of_cluster.end()) + 1;
}

namespace {

Dataset draw_split(const ClusterConfig& cfg, const std::vector<std::size_t>& counts, std::uint64_t key) {
  CounterRng rng(key);
  std::size_t n = 0;
  for (auto c : counts) n += c;
  std::vector<double> xs;
  xs.reserve(2 * n);
  Dataset d;
  d.labels.reserve(n);
  for (std::size_t k = 0; k < cfg.centers.size(); ++k) {
    for (std::size_t i = 0; i < counts[k]; ++i) {
      const double zx = rng.normal();
      const double zy = rng.normal();
      xs.push_back(cfg.centers[k][0] + cfg.stds[k] * zx);
      xs.push_back(cfg.centers[k][1] + cfg.stds[k] * zy);
      d.labels.push_back(cfg.class_of_cluster[k]);
    }
  }
  d.features = Tensor::from({n, 2}, std::move(xs));
  d.class_count = std::max(2, cfg.class_count());
  d.ids.resize(n);
  for (std::size_t i = 0; i < n; ++i) d.ids[i] = i;
  return d;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

double parse_double(std::string_view field, std::size_t line_no) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size() || field.empty()) {
    throw ValidationError("line " + std::to_string(line_no) + ": non-numeric field '" + std::string(field) + "'");
  }
  return v;
}

}  // namespace

SplitDataset generate_clusters(const ClusterConfig& config, std::uint64_t seed) {
  config.validate();
  return {draw_split(config, config.train_counts, derive_seed(seed, "clusters.train")),
          draw_split(config, config.test_counts, derive_seed(seed, "clusters.test"))};
}

Dataset parse_csv_dataset(std::string_view text, const CsvOptions& options) {
  std::vector<double> feats;
  std::vector<int> labels;
  std::size_t width = 0;
  std::size_t line_no = 0;
  bool skipped_header = !options.header;

  std::size_t pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() : nl + 1;
    ++line_no;
    line = trim(line);
    if (line.empty()) continue;
    if (!skipped_header) {
      skipped_header = true;
      continue;
    }
    auto fields = split_fields(line);
    if (fields.size() < 2) {
      throw ValidationError("line " + std::to_string(line_no) + ": need at least one feature and a label");
    }
    if (width == 0) {
      width = fields.size();
    } else if (fields.size() != width) {
      throw ValidationError("line " + std::to_string(line_no) + ": ragged row with " + std::to_string(fields.size()) +
                            " fields, expected " + std::to_string(width));
    }
    for (std::size_t i = 0; i + 1 < fields.size(); ++i) feats.push_back(parse_double(fields[i], line_no));
    const std::string_view lf = fields.back();
    long long label = 0;
    auto [ptr, ec] = std::from_chars(lf.data(), lf.data() + lf.size(), label);
    if (ec != std::errc() || ptr != lf.data() + lf.size() || lf.empty()) {
      throw ValidationError("line " + std::to_string(line_no) + ": label '" + std::string(lf) +
                            "' is not an integer");
    }
    if (label < 0) throw ValidationError("line " + std::to_string(line_no) + ": negative label");
    if (label > std::numeric_limits<int>::max()) throw ValidationError("line " + std::to_string(line_no) + ": label too large");
    labels.push_back(static_cast<int>(label));
  }
  if (labels.empty()) throw ValidationError("CSV dataset is empty");

  const std::size_t n = labels.size(), d = width - 1;
  if (options.minmax) {
    for (std::size_t c = 0; c < d; ++c) {
      double lo = feats[c], hi = feats[c];
      for (std::size_t r = 0; r < n; ++r) {
        lo = std::min(lo, feats[r * d + c]);
        hi = std::max(hi, feats[r * d + c]);
      }
      const double span = hi - lo;
      for (std::size_t r = 0; r < n; ++r) feats[r * d + c] = span > 0.0 ? (feats[r * d + c] - lo) / span : 0.0;
    }
  }

  Dataset out;
  out.features = Tensor::from({n, d}, std::move(feats));
  out.class_count = *std::max_element(labels.begin(), labels.end()) + 1;
  out.labels = std::move(labels);
  out.ids.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.ids[i] = i;
  return out;
}

Dataset load_csv_dataset(const std::filesystem::path& path, const CsvOptions& options) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_csv_dataset(ss.str(), options);
}

void write_csv_dataset(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write dataset " + path.string());
  const std::size_t d = data.dim();
  auto v = data.features.values();
  char buf[64];
  for (std::size_t r = 0; r < data.size(); ++r) {
    for (std::size_t c = 0; c < d; ++c) {
      auto res = std::to_chars(buf, buf + sizeof buf, v[r * d + c]);
      out.write(buf, res.ptr - buf);
      out << ',';
    }
    out << data.labels[r] << '\n';
  }
  if (!out) throw IoError("failed writing dataset " + path.string());
}

Dataset subset(const Dataset& data, std::span<const std::size_t> ids) {
  std::unordered_map<std::size_t, std::size_t> position;
  position.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) position.emplace(data.ids[i], i);

  std::vector<std::size_t> rows;
  rows.reserve(ids.size());
  std::unordered_set<std::size_t> seen;
  seen.reserve(ids.size());
  for (std::size_t id : ids) {
    auto it = position.find(id);
    if (it == position.end()) throw ValidationError("subset: unknown sample id " + std::to_string(id));
    if (!seen.insert(id).second) throw ValidationError("subset: duplicate sample id " + std::to_string(id));
    rows.push_back(it->second);
  }

  Dataset out;
  out.features = data.gather_rows(rows);
  out.labels = data.gather_labels(rows);
  out.ids = data.gather_ids(rows);
  out.class_count = data.class_count;
  return out;
}

}  // namespace easycore
