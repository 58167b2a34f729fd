#include "easycore/coreset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "easycore/error.hpp"
#include "easycore/rng.hpp"

namespace easycore {

AignLedger::AignLedger(std::vector<std::size_t> ids, bool keep_per_epoch)
    : ids_(std::move(ids)), sum_(ids_.size(), 0.0), count_(ids_.size(), 0), keep_per_epoch_(keep_per_epoch) {}

void AignLedger::add(std::size_t position, double norm) {
  if (position >= ids_.size()) {
    throw ShapeError("AIGN ledger: position " + std::to_string(position) + " out of range for " +
                     std::to_string(ids_.size()) + " samples");
  }
  if (!std::isfinite(norm) || norm < 0.0) {
    throw NumericError("AIGN ledger: invalid norm for sample id " + std::to_string(ids_.at(position)));
  }
  sum_[position] += norm;
  ++count_[position];
}

void AignLedger::record_epoch(std::span<const double> norms) {
  if (norms.size() != ids_.size()) {
    throw ShapeError("AIGN ledger tracks " + std::to_string(ids_.size()) + " samples, got " +
                     std::to_string(norms.size()) + " norms");
  }
  for (std::size_t i = 0; i < norms.size(); ++i) add(i, norms[i]);
  if (keep_per_epoch_) per_epoch_.emplace_back(norms.begin(), norms.end());
}

std::vector<double> aign_scores(const AignLedger& ledger) {
  std::vector<double> out(ledger.size());
  for (std::size_t i = 0; i < ledger.size(); ++i) {
    if (ledger.count()[i] == 0) {
      throw ValidationError("AIGN ledger: sample id " + std::to_string(ledger.ids()[i]) + " has no recorded epochs");
    }
    out[i] = ledger.sum_norm()[i] / static_cast<double>(ledger.count()[i]);
  }
  return out;
}

std::vector<double> aign_scores_from_trajectory(const std::vector<std::vector<double>>& per_epoch) {
  if (per_epoch.empty()) throw ValidationError("AIGN trajectory is empty");
  const std::size_t n = per_epoch.front().size();
  std::vector<double> out(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    std::vector<double> column;
    column.reserve(per_epoch.size());
    for (const auto& row : per_epoch) column.push_back(row.at(j));
    out[j] = std::accumulate(column.begin(), column.end(), 0.0) / static_cast<double>(column.size());
  }
  return out;
}

std::size_t coreset_size(std::size_t n, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw ValidationError("coreset fraction must be in (0, 1], got " + format_double(fraction));
  }
  const auto k = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 1e-9));
  return std::min(k, n);
}

namespace {

std::vector<std::size_t> default_ids(std::size_t n, std::span<const std::size_t> ids) {
  if (ids.empty()) {
    std::vector<std::size_t> out(n);
    std::iota(out.begin(), out.end(), std::size_t{0});
    return out;
  }
  if (ids.size() != n) {
    throw ShapeError(std::to_string(n) + " scores but " + std::to_string(ids.size()) + " ids");
  }
  return {ids.begin(), ids.end()};
}

// Positions sorted by (score, id).
std::vector<std::size_t> order_positions(std::span<const double> scores, const std::vector<std::size_t>& ids) {
  for (std::size_t i = 0; i < scores.size(); ++i)
    if (std::isnan(scores[i])) throw ValidationError("NaN score for sample id " + std::to_string(ids[i]));
  std::vector<std::size_t> pos(scores.size());
  std::iota(pos.begin(), pos.end(), std::size_t{0});
  std::stable_sort(pos.begin(), pos.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] < scores[b];
    return ids[a] < ids[b];
  });
  return pos;
}

}  // namespace

std::vector<std::size_t> hardness_order(std::span<const double> scores, std::span<const std::size_t> ids) {
  const auto id_list = default_ids(scores.size(), ids);
  const auto pos = order_positions(scores, id_list);
  std::vector<std::size_t> out(pos.size());
  for (std::size_t i = 0; i < pos.size(); ++i) out[i] = id_list[pos[i]];
  return out;
}

std::vector<std::size_t> easycore_select(std::span<const double> scores, double fraction,
                                         std::span<const std::size_t> ids) {
  const std::size_t k = coreset_size(scores.size(), fraction);
  if (k == 0) {
    throw ValidationError("coreset fraction " + format_double(fraction) + " selects no samples out of " +
                          std::to_string(scores.size()));
  }
  auto order = hardness_order(scores, ids);
  order.resize(k);
  return order;
}

BalancedSelection easycore_balanced(std::span<const double> scores, std::span<const int> labels, double fraction,
                                    std::span<const std::size_t> ids) {
  if (labels.size() != scores.size()) {
    throw ShapeError(std::to_string(scores.size()) + " scores but " + std::to_string(labels.size()) + " labels");
  }
  coreset_size(0, fraction);  // validates fraction
  const auto id_list = default_ids(scores.size(), ids);
  const auto pos = order_positions(scores, id_list);

  std::map<int, std::vector<std::size_t>> per_class;  // ascending class order
  for (std::size_t p : pos) per_class[labels[p]].push_back(p);

  BalancedSelection out;
  for (const auto& [cls, members] : per_class) {
    const std::size_t quota = coreset_size(members.size(), fraction);
    if (quota == 0) out.empty_classes.push_back(cls);
    for (std::size_t i = 0; i < quota; ++i) out.ids.push_back(id_list[members[i]]);
  }
  return out;
}

std::vector<std::size_t> uniform_select(std::size_t n, double fraction, std::uint64_t seed) {
  const std::size_t k = coreset_size(n, fraction);
  std::vector<std::size_t> ids(n);
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  CounterRng rng(derive_seed(seed, "uniform-select"));
  // Partial Fisher-Yates: the first k slots are a uniform sample.
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
    std::swap(ids[i], ids[j]);
  }
  ids.resize(k);
  return ids;
}

std::vector<double> normalize_scores(std::span<const double> scores) {
  double mx = 0.0;
  for (double s : scores) mx = std::max(mx, s);
  if (!(mx > 0.0)) throw ValidationError("cannot normalize scores: maximum is not positive");
  std::vector<double> out(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) out[i] = scores[i] / mx;
  return out;
}

CoresetMethod parse_coreset_method(std::string_view name) {
  if (name == "easycore") return CoresetMethod::easycore;
  if (name == "easycore_balanced") return CoresetMethod::easycore_balanced;
  if (name == "uniform") return CoresetMethod::uniform;
  throw ValidationError("unknown coreset method '" + std::string(name) +
                        "' (expected easycore, easycore_balanced or uniform)");
}

std::string_view to_string(CoresetMethod method) {
  switch (method) {
    case CoresetMethod::easycore: return "easycore";
    case CoresetMethod::easycore_balanced: return "easycore_balanced";
    case CoresetMethod::uniform: return "uniform";
  }
  return "?";
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

ScoreTable make_score_table(const AignLedger& ledger, std::span<const int> labels) {
  if (labels.size() != ledger.size()) throw ShapeError("score table: label count does not match ledger");
  ScoreTable t;
  t.ids = ledger.ids();
  t.labels.assign(labels.begin(), labels.end());
  t.aign = aign_scores(ledger);
  double mx = 0.0;
  for (double s : t.aign) mx = std::max(mx, s);
  t.normalized = mx > 0.0 ? normalize_scores(t.aign) : std::vector<double>(t.aign.size(), 0.0);
  return t;
}

void write_score_csv(const ScoreTable& table, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write score file " + path.string());
  out << "id,label,aign,normalized\n";
  for (std::size_t i = 0; i < table.ids.size(); ++i) {
    out << table.ids[i] << ',' << table.labels[i] << ',' << format_double(table.aign[i]) << ','
        << format_double(table.normalized[i]) << '\n';
  }
  if (!out) throw IoError("failed writing score file " + path.string());
}

namespace {

std::vector<std::vector<std::string>> read_csv_with_header(const std::filesystem::path& path,
                                                           std::string_view expected_header) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ValidationError(path.string() + " is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != expected_header) {
    throw ValidationError(path.string() + ": expected header '" + std::string(expected_header) + "', got '" + line +
                          "'");
  }
  const auto width = static_cast<std::size_t>(std::count(expected_header.begin(), expected_header.end(), ',') + 1);
  std::vector<std::vector<std::string>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(f);
    if (fields.size() != width) {
      throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": expected " + std::to_string(width) +
                            " fields");
    }
    rows.push_back(std::move(fields));
  }
  return rows;
}

template <typename T>
T parse_number(const std::string& s, const std::filesystem::path& path) {
  T v{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    throw ValidationError(path.string() + ": bad number '" + s + "'");
  }
  return v;
}

}  // namespace

ScoreTable read_score_csv(const std::filesystem::path& path) {
  ScoreTable t;
  for (const auto& row : read_csv_with_header(path, "id,label,aign,normalized")) {
    t.ids.push_back(parse_number<std::size_t>(row[0], path));
    t.labels.push_back(parse_number<int>(row[1], path));
    t.aign.push_back(parse_number<double>(row[2], path));
    t.normalized.push_back(parse_number<double>(row[3], path));
  }
  if (t.ids.empty()) throw ValidationError(path.string() + " holds no scores");
  return t;
}

std::vector<std::size_t> select_coreset(const ScoreTable& table, const CoresetSpec& spec,
                                        std::vector<int>* empty_classes) {
  switch (spec.method) {
    case CoresetMethod::easycore:
      return easycore_select(table.aign, spec.fraction, table.ids);
    case CoresetMethod::easycore_balanced: {
      if (table.labels.size() != table.aign.size()) {
        throw ValidationError("easycore_balanced needs a label for every scored sample");
      }
      auto sel = easycore_balanced(table.aign, table.labels, spec.fraction, table.ids);
      if (empty_classes) *empty_classes = sel.empty_classes;
      return sel.ids;
    }
    case CoresetMethod::uniform: {
      auto picks = uniform_select(table.ids.size(), spec.fraction, spec.seed);
      for (auto& p : picks) p = table.ids[p];
      return picks;
    }
  }
  throw ValidationError("unknown coreset method");
}

void write_selection_csv(std::span<const std::size_t> ids, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write selection file " + path.string());
  out << "rank,id\n";
  for (std::size_t i = 0; i < ids.size(); ++i) out << i << ',' << ids[i] << '\n';
  if (!out) throw IoError("failed writing selection file " + path.string());
}

std::vector<std::size_t> read_selection_csv(const std::filesystem::path& path) {
  std::vector<std::size_t> ids;
  for (const auto& row : read_csv_with_header(path, "rank,id")) ids.push_back(parse_number<std::size_t>(row[1], path));
  return ids;
}

}  // namespace easycore
