#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "easycore/autodiff.hpp"
#include "easycore/tensor.hpp"

namespace easycore {

struct ModelConfig {
  std::size_t input_dim = 2;
  std::size_t hidden_dim = 256;
  std::size_t num_blocks = 20;
  std::size_t num_classes = 2;

  /// input_dim*hidden + hidden + blocks*(hidden^2 + hidden) + hidden*classes + classes
  std::size_t parameter_count() const;
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

struct NamedParameter {
  std::string name;
  Tensor tensor;
};

/// Whether a forward pass records gradients for the model parameters.
enum class ParamMode { frozen, trainable };

/// Residual MLP: input linear layer, `num_blocks` blocks of
/// x <- x + Linear(relu(x)), then a linear head.
///
/// Weights are stored [fan_in x fan_out] so a layer is `x . W + b`.
/// Parameter order: input.weight, input.bias, blocks.<i>.weight,
/// blocks.<i>.bias, ..., head.weight, head.bias.
class Model {
 public:
  Model(ModelConfig config, std::vector<NamedParameter> parameters);

  const ModelConfig& config() const { return config_; }
  std::span<const NamedParameter> parameters() const { return params_; }
  std::span<NamedParameter> parameters() { return params_; }
  const Tensor& parameter(const std::string& name) const;
  std::size_t parameter_count() const;

  /// Activations after the residual stack, before the head.
  Tensor features(Tape& tape, const Tensor& batch, ParamMode mode) const;
  Tensor head(Tape& tape, const Tensor& features, ParamMode mode) const;
  Tensor forward(Tape& tape, const Tensor& batch, ParamMode mode) const;

  void zero_grad();
  /// Gradient spans aligned with parameters(); zero-length spans for params
  /// without a gradient buffer.
  std::vector<std::span<const double>> gradients() const;

  /// Deep copy with fresh parameter storage.
  Model clone() const;

 private:
  Tensor param(std::size_t index, ParamMode mode) const;

  ModelConfig config_;
  std::vector<NamedParameter> params_;
};

std::vector<NamedParameter> make_parameter_layout(const ModelConfig& config);

/// Kaiming-uniform fan-in initialisation (leaky-relu slope sqrt(5), i.e.
/// weight bound 1/sqrt(fan_in)), bias bound 1/sqrt(fan_in). Deterministic in
/// `init_seed`.
Model build_model(const ModelConfig& config, std::uint64_t init_seed);

/// Read-only convenience passes; nothing is recorded.
Tensor forward_logits(const Model& model, const Tensor& batch);
Tensor penultimate_features(const Model& model, const Tensor& batch);

/// Argmax per row; ties go to the lowest class index.
std::vector<int> argmax_rows(const Tensor& logits);
std::vector<int> predict(const Model& model, const Tensor& batch);

}  // namespace easycore
