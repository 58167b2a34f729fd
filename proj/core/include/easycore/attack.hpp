#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "easycore/data.hpp"
#include "easycore/model.hpp"

namespace easycore {

enum class AttackObjective { cross_entropy, kl_to_clean };
AttackObjective parse_attack_objective(std::string_view name);
std::string_view to_string(AttackObjective objective);

struct ClipRange {
  double min;
  double max;
};

/// l-infinity adversary. step_size defaults to epsilon / 4.
struct AttackConfig {
  double epsilon = 0.0;
  std::size_t steps = 20;
  std::optional<double> step_size;
  bool random_start = false;
  std::uint64_t start_seed = 0;
  std::optional<double> clip_min;
  std::optional<double> clip_max;
  AttackObjective objective = AttackObjective::cross_entropy;

  double effective_step_size() const { return step_size.value_or(epsilon / 4.0); }
  std::optional<ClipRange> clip() const;
  void validate() const;
};

/// x + epsilon * sign(grad_x CE), then clipped. sign(0) = 0.
Tensor fgsm(const Model& model, const Tensor& x, std::span<const int> labels, double epsilon,
            std::optional<ClipRange> clip = std::nullopt);

/// Projected sign-gradient ascent. Each iteration: step, project onto the
/// epsilon-ball around x, clip to the input domain. Random starts for row r
/// are keyed by (start_seed, sample_keys[r]), sample_keys defaulting to r, so
/// results do not depend on how a dataset is batched.
Tensor pgd(const Model& model, const Tensor& x, std::span<const int> labels, const AttackConfig& cfg,
           std::span<const std::size_t> sample_keys = {});

struct AdversarialResult {
  double clean_accuracy = 0.0;
  double overall = 0.0;  // adversarial accuracy
  std::vector<std::size_t> ids;
  std::vector<std::uint8_t> clean_correct;
  std::vector<std::uint8_t> adv_correct;
  std::vector<double> linf;
};

/// PGD over the whole dataset in shards; per-sample outcomes in dataset order.
AdversarialResult adversarial_accuracy(const Model& model, const Dataset& data, const AttackConfig& cfg,
                                       std::size_t batch_size = 256);

/// "id,clean_correct,adv_correct,linf_perturbation"
void write_attack_csv(const AdversarialResult& result, const std::filesystem::path& path);
AdversarialResult read_attack_csv(const std::filesystem::path& path);

}  // namespace easycore
