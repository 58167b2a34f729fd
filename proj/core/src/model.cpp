#include "easycore/model.hpp"

#include <cmath>

#include "easycore/error.hpp"
#include "easycore/rng.hpp"

namespace easycore {

std::size_t ModelConfig::parameter_count() const {
  const std::size_t h = hidden_dim;
  return input_dim * h + h + num_blocks * (h * h + h) + h * num_classes + num_classes;
}

void ModelConfig::validate() const {
  if (input_dim == 0) throw ValidationError("model.input_dim must be positive");
  if (hidden_dim == 0) throw ValidationError("model.hidden_dim must be positive");
  if (num_classes < 2) throw ValidationError("model.num_classes must be at least 2");
}

std::vector<NamedParameter> make_parameter_layout(const ModelConfig& config) {
  config.validate();
  const std::size_t h = config.hidden_dim;
  std::vector<NamedParameter> params;
  params.reserve(4 + 2 * config.num_blocks);
  params.push_back({"input.weight", Tensor::zeros({config.input_dim, h}, true)});
  params.push_back({"input.bias", Tensor::zeros({h}, true)});
  for (std::size_t i = 0; i < config.num_blocks; ++i) {
    params.push_back({"blocks." + std::to_string(i) + ".weight", Tensor::zeros({h, h}, true)});
    params.push_back({"blocks." + std::to_string(i) + ".bias", Tensor::zeros({h}, true)});
  }
  params.push_back({"head.weight", Tensor::zeros({h, config.num_classes}, true)});
  params.push_back({"head.bias", Tensor::zeros({config.num_classes}, true)});
  return params;
}

Model::Model(ModelConfig config, std::vector<NamedParameter> parameters)
    : config_(config), params_(std::move(parameters)) {
  const auto layout = make_parameter_layout(config_);
  if (layout.size() != params_.size()) {
    throw ShapeError("model expects " + std::to_string(layout.size()) + " parameter tensors, got " +
                     std::to_string(params_.size()));
  }
  for (std::size_t i = 0; i < layout.size(); ++i) {
    if (layout[i].name != params_[i].name) {
      throw ShapeError("parameter " + std::to_string(i) + " should be '" + layout[i].name + "', got '" +
                       params_[i].name + "'");
    }
    if (layout[i].tensor.shape() != params_[i].tensor.shape()) {
      throw ShapeError("parameter '" + layout[i].name + "' expects shape " +
                       shape_to_string(layout[i].tensor.shape()) + ", got " +
                       shape_to_string(params_[i].tensor.shape()));
    }
  }
}

const Tensor& Model::parameter(const std::string& name) const {
  for (const auto& p : params_)
    if (p.name == name) return p.tensor;
  throw ValidationError("no parameter named '" + name + "'");
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.tensor.numel();
  return n;
}

Tensor Model::param(std::size_t index, ParamMode mode) const {
  const Tensor& t = params_[index].tensor;
  return mode == ParamMode::trainable ? t : t.detached();
}

Tensor Model::features(Tape& tape, const Tensor& batch, ParamMode mode) const {
  if (batch.rank() != 2 || batch.shape()[1] != config_.input_dim) {
    throw ShapeError("model expects batch of width " + std::to_string(config_.input_dim) + ", got shape " +
                     shape_to_string(batch.shape()));
  }
  Tensor x = tape.add(tape.matmul(batch, param(0, mode)), param(1, mode));
  for (std::size_t i = 0; i < config_.num_blocks; ++i) {
    const std::size_t w = 2 + 2 * i;
    Tensor fx = tape.add(tape.matmul(tape.relu(x), param(w, mode)), param(w + 1, mode));
    x = tape.residual_add(x, fx);
  }
  return x;
}

Tensor Model::head(Tape& tape, const Tensor& features, ParamMode mode) const {
  const std::size_t w = params_.size() - 2;
  return tape.add(tape.matmul(features, param(w, mode)), param(w + 1, mode));
}

Tensor Model::forward(Tape& tape, const Tensor& batch, ParamMode mode) const {
  return head(tape, features(tape, batch, mode), mode);
}

void Model::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

std::vector<std::span<const double>> Model::gradients() const {
  std::vector<std::span<const double>> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p.tensor.grad());
  return out;
}

Model Model::clone() const {
  std::vector<NamedParameter> copy;
  copy.reserve(params_.size());
  for (const auto& p : params_) {
    Tensor t = p.tensor.clone();
    copy.push_back({p.name, Tensor::from(t.shape(), {t.values().begin(), t.values().end()}, true)});
  }
  return Model(config_, std::move(copy));
}

Model build_model(const ModelConfig& config, std::uint64_t init_seed) {
  auto params = make_parameter_layout(config);
  CounterRng rng(derive_seed(init_seed, "init"));
  for (std::size_t i = 0; i < params.size(); i += 2) {
    Tensor& weight = params[i].tensor;
    Tensor& bias = params[i + 1].tensor;
    const double fan_in = static_cast<double>(weight.shape()[0]);
    const double bound = 1.0 / std::sqrt(fan_in);
    for (double& v : weight.mutable_values()) v = rng.uniform(-bound, bound);
    for (double& v : bias.mutable_values()) v = rng.uniform(-bound, bound);
  }
  return Model(config, std::move(params));
}

Tensor forward_logits(const Model& model, const Tensor& batch) {
  Tape tape;
  return model.forward(tape, batch.detached(), ParamMode::frozen);
}

Tensor penultimate_features(const Model& model, const Tensor& batch) {
  Tape tape;
  return model.features(tape, batch.detached(), ParamMode::frozen);
}

std::vector<int> argmax_rows(const Tensor& logits) {
  const std::size_t rows = logits.rows(), cols = logits.cols();
  auto v = logits.values();
  std::vector<int> out(rows, 0);
  for (std::size_t r = 0; r < rows; ++r) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < cols; ++c)
      if (v[r * cols + c] > v[r * cols + best]) best = c;
    out[r] = static_cast<int>(best);
  }
  return out;
}

std::vector<int> predict(const Model& model, const Tensor& batch) {
  return argmax_rows(forward_logits(model, batch));
}

}  // namespace easycore
