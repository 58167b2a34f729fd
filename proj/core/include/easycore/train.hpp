#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "easycore/attack.hpp"
#include "easycore/coreset.hpp"
#include "easycore/data.hpp"
#include "easycore/model.hpp"

namespace easycore {

enum class SchedulerKind { multistep, cosine, step };
SchedulerKind parse_scheduler_kind(std::string_view name);
std::string_view to_string(SchedulerKind kind);

struct SchedulerSpec {
  SchedulerKind kind = SchedulerKind::cosine;
  std::vector<std::size_t> milestones;  // multistep
  double gamma = 0.1;                   // multistep, step
  std::size_t step_size = 30;           // step
  std::size_t t_max = 100;              // cosine
  double eta_min = 0.0;                 // cosine

  void validate() const;
};

/// multistep: lr0 * gamma^(#milestones <= epoch)
/// step:      lr0 * gamma^floor(epoch / step_size)
/// cosine:    eta_min + (lr0 - eta_min) * (1 + cos(pi * epoch / t_max)) / 2
///
/// When 1/gamma is an integer (gamma = 0.1, 0.5, ...) the decay is applied as
/// repeated division by that integer, which keeps decimal rates exact
/// (0.1 -> 0.01 -> 0.001).
double lr_at(const SchedulerSpec& spec, double initial_lr, std::size_t epoch);

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 128;
  double initial_lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  SchedulerSpec scheduler;
  std::uint64_t seed = 0;
  std::size_t checkpoint_every = 0;  // 0 = off
  std::filesystem::path checkpoint_dir = "checkpoints";
  bool record_aign = false;
  bool keep_aign_trajectory = false;

  void validate() const;
};

struct TradesConfig {
  double beta = 6.0;
  AttackConfig inner_attack;  // objective must be kl_to_clean

  /// PGD-10, step epsilon/4, random start, KL objective.
  static TradesConfig with_epsilon(double epsilon);
  void validate() const;
};

/// Momentum buffers aligned with Model::parameters().
struct SgdState {
  std::vector<std::vector<double>> velocity;
};

/// v <- momentum * v + (grad + weight_decay * w);  w <- w - lr * v
void sgd_step(Model& model, std::span<const std::span<const double>> grads, double lr, double momentum,
              double weight_decay, SgdState& state);

/// Per-sample ||grad_x CE(f(x), y)||_2 in dataset order, computed in
/// parallel shards on a read-only model.
std::vector<double> input_gradient_norms(const Model& model, const Dataset& data, std::size_t shard_rows = 256);

struct EpochLog {
  std::size_t epoch = 0;
  double lr = 0.0;
  double mean_loss = 0.0;
  double train_accuracy = 0.0;
};

struct TrainHooks {
  /// Extra datasets whose AIGN is recorded alongside the training set (only
  /// when record_aign is on), e.g. a held-out test split.
  std::vector<const Dataset*> probes;
  std::function<void(std::size_t epoch, const Model& model)> on_epoch_end;
};

struct TrainResult {
  Model model;
  std::optional<AignLedger> ledger;       // training set
  std::vector<AignLedger> probe_ledgers;  // aligned with TrainHooks::probes
  std::vector<EpochLog> log;
  std::vector<std::filesystem::path> checkpoints;
};

/// Seeded-shuffle mini-batch SGD on mean softmax cross-entropy. With
/// record_aign, every epoch ends with a read-only pass that adds each sample's
/// input-gradient norm to the ledger.
TrainResult train_standard(Model model, const Dataset& data, const TrainConfig& config, const TrainHooks& hooks = {});

/// CE(f(x), y) + beta * KL(softmax(f(x')) || softmax(f(x))), with x' from the
/// inner attack (treated as a constant). Recorded on `tape`.
Tensor trades_loss(Tape& tape, const Model& model, const Tensor& x, std::span<const int> labels,
                   const TradesConfig& cfg, std::span<const std::size_t> sample_keys = {});

TrainResult train_trades(Model model, const Dataset& data, const TrainConfig& config, const TradesConfig& trades,
                         const TrainHooks& hooks = {});

/// Checkpoint-replay AIGN: one scoring pass per checkpoint file.
AignLedger aign_from_checkpoints(std::span<const std::filesystem::path> checkpoints, const Dataset& data,
                                 bool keep_trajectory = false);

/// Fraction of correctly classified samples.
double accuracy(const Model& model, const Dataset& data);

void write_train_log_csv(std::span<const EpochLog> log, const std::filesystem::path& path);

}  // namespace easycore
