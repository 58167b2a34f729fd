#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "easycore/attack.hpp"
#include "easycore/data.hpp"
#include "easycore/model.hpp"
#include "easycore/train.hpp"

namespace easycore::cli {

struct DatasetSection {
  std::string kind = "clusters";  // clusters | csv
  ClusterConfig clusters = ClusterConfig::six_clusters();
  std::string train_path;
  std::string test_path;
  bool header = false;
  bool minmax = false;
};

struct ModelSection {
  std::size_t hidden_dim = 256;
  std::size_t num_blocks = 20;
};

struct TrainSection {
  std::string mode = "standard";  // standard | trades
  std::size_t epochs = 100;
  std::size_t batch_size = 200;
  double lr = 3e-4;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  SchedulerKind scheduler = SchedulerKind::cosine;
  std::vector<std::size_t> milestones{75, 90};
  double gamma = 0.1;
  std::size_t step_size = 30;
  std::optional<std::size_t> t_max;  // defaults to epochs
  double eta_min = 0.0;
  std::size_t checkpoint_every = 0;
};

struct TradesSection {
  double beta = 6.0;
  double epsilon = 0.5;
  std::size_t steps = 10;
  std::optional<double> step_size;
  bool random_start = true;
};

struct AttackSection {
  double epsilon = 0.5;
  std::size_t steps = 20;
  std::optional<double> step_size;
  bool random_start = false;
  std::optional<double> clip_min;
  std::optional<double> clip_max;
  std::size_t batch_size = 256;
};

struct SelectSection {
  std::string method = "easycore";
  double fraction = 0.6;
  std::optional<std::uint64_t> seed;  // uniform; defaults to a derived seed
};

struct ScoreSection {
  bool probe_test = false;
  bool trajectory = false;
};

struct AnalyzeSection {
  std::size_t bins = 20;
  std::size_t resolution = 400;
  double pad = 0.1;
  std::vector<double> variance_targets{0.95};
  std::size_t histogram_bins = 30;
  std::size_t lemma1_batch = 8;
  std::size_t lemma1_batches = 100;
  std::string split = "test";
};

struct RunConfig {
  std::uint64_t seed = 0;
  DatasetSection dataset;
  ModelSection model;
  TrainSection train;
  TradesSection trades;
  AttackSection attack;
  SelectSection select;
  ScoreSection score;
  AnalyzeSection analyze;

  /// Applies a TOML document on top of the current values. Every unknown key,
  /// type mismatch and invalid value is collected; throws ValidationError
  /// listing all of them.
  void merge_toml(std::string_view text, const std::string& origin);
  void merge_file(const std::filesystem::path& path);
  /// `section.key=value`, value in TOML syntax; bare words are taken as strings.
  void merge_assignment(const std::string& assignment);
  void validate() const;

  nlohmann::json to_json() const;
  /// SHA-256 of the canonical JSON form.
  std::string digest() const;

  std::uint64_t subsystem_seed(std::string_view name) const;
  SplitDataset load_data() const;
  ModelConfig model_config(const Dataset& data) const;
  TrainConfig train_config(bool record_aign) const;
  TradesConfig trades_config() const;
  AttackConfig attack_config() const;
};

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

}  // namespace easycore::cli
