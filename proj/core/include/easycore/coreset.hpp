#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace easycore {

/// Running per-sample sums of input-gradient norms across epochs.
///
/// Slots are addressed by position; `ids()[pos]` names the sample. Writers
/// touching disjoint positions may run concurrently; `close_epoch` is
/// single-threaded.
class AignLedger {
 public:
  AignLedger() = default;
  explicit AignLedger(std::vector<std::size_t> ids, bool keep_per_epoch = false);

  /// Adds one epoch's norm for the sample at `position`.
  void add(std::size_t position, double norm);
  /// Adds a full epoch of norms (aligned with ids()) and closes the epoch.
  void record_epoch(std::span<const double> norms);

  std::size_t size() const { return ids_.size(); }
  bool empty() const { return ids_.empty(); }
  const std::vector<std::size_t>& ids() const { return ids_; }
  const std::vector<double>& sum_norm() const { return sum_; }
  const std::vector<std::size_t>& count() const { return count_; }
  /// [epochs x n] raw norms, empty unless constructed with keep_per_epoch.
  const std::vector<std::vector<double>>& per_epoch() const { return per_epoch_; }
  bool keeps_per_epoch() const { return keep_per_epoch_; }

 private:
  std::vector<std::size_t> ids_;
  std::vector<double> sum_;
  std::vector<std::size_t> count_;
  bool keep_per_epoch_ = false;
  std::vector<std::vector<double>> per_epoch_;
};

/// score[pos] = sum_norm[pos] / count[pos]. Throws on a zero count.
std::vector<double> aign_scores(const AignLedger& ledger);

/// Mean over the per-epoch matrix, column by column (independent route).
std::vector<double> aign_scores_from_trajectory(const std::vector<std::vector<double>>& per_epoch);

/// ⌊fraction * n⌋ with a 1e-9 guard against decimal representation error
/// (0.29 * 100 selects 29, not 28). Throws unless fraction is in (0, 1].
std::size_t coreset_size(std::size_t n, double fraction);

/// Ids sorted by ascending score; ties by ascending id. `ids` defaults to
/// 0..n-1. Throws on NaN.
std::vector<std::size_t> hardness_order(std::span<const double> scores, std::span<const std::size_t> ids = {});

/// The first ⌊fraction * n⌋ ids of hardness_order. Throws if that is empty.
std::vector<std::size_t> easycore_select(std::span<const double> scores, double fraction,
                                         std::span<const std::size_t> ids = {});

struct BalancedSelection {
  std::vector<std::size_t> ids;
  /// Classes present in the data whose quota rounded down to zero.
  std::vector<int> empty_classes;
};

/// Per class c: the ⌊fraction * n_c⌋ lowest-score samples of c, class
/// segments concatenated in ascending class order.
BalancedSelection easycore_balanced(std::span<const double> scores, std::span<const int> labels, double fraction,
                                    std::span<const std::size_t> ids = {});

/// Seeded sample of ⌊fraction * n⌋ ids from 0..n-1 without replacement.
std::vector<std::size_t> uniform_select(std::size_t n, double fraction, std::uint64_t seed);

/// score / max(score). Throws when every score is zero.
std::vector<double> normalize_scores(std::span<const double> scores);

enum class CoresetMethod { easycore, easycore_balanced, uniform };
CoresetMethod parse_coreset_method(std::string_view name);
std::string_view to_string(CoresetMethod method);

struct CoresetSpec {
  CoresetMethod method = CoresetMethod::easycore;
  double fraction = 0.6;
  std::uint64_t seed = 0;  // uniform only
};

/// Interchange table for the score file "id,label,aign,normalized".
struct ScoreTable {
  std::vector<std::size_t> ids;
  std::vector<int> labels;
  std::vector<double> aign;
  std::vector<double> normalized;
};

ScoreTable make_score_table(const AignLedger& ledger, std::span<const int> labels);
void write_score_csv(const ScoreTable& table, const std::filesystem::path& path);
ScoreTable read_score_csv(const std::filesystem::path& path);

/// Dispatches `spec` over a score table. Balanced selection warnings are
/// returned through `empty_classes` when non-null.
std::vector<std::size_t> select_coreset(const ScoreTable& table, const CoresetSpec& spec,
                                        std::vector<int>* empty_classes = nullptr);

/// Selection file "rank,id", rank starting at 0.
void write_selection_csv(std::span<const std::size_t> ids, const std::filesystem::path& path);
std::vector<std::size_t> read_selection_csv(const std::filesystem::path& path);

/// Shortest decimal form that round-trips to the same double.
std::string format_double(double v);

}  // namespace easycore
