#include "easycore/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <numeric>
#include <string>

#include "easycore/checkpoint.hpp"
#include "easycore/error.hpp"
#include "easycore/parallel.hpp"
#include "easycore/rng.hpp"

namespace easycore {

SchedulerKind parse_scheduler_kind(std::string_view name) {
  if (name == "multistep") return SchedulerKind::multistep;
  if (name == "cosine") return SchedulerKind::cosine;
  if (name == "step") return SchedulerKind::step;
  throw ValidationError("unknown scheduler '" + std::string(name) + "' (expected multistep, cosine or step)");
}

std::string_view to_string(SchedulerKind kind) {
  switch (kind) {
    case SchedulerKind::multistep: return "multistep";
    case SchedulerKind::cosine: return "cosine";
    case SchedulerKind::step: return "step";
  }
  return "?";
}

void SchedulerSpec::validate() const {
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ValidationError("scheduler.gamma must be in (0, 1]");
  for (std::size_t i = 1; i < milestones.size(); ++i)
    if (milestones[i] <= milestones[i - 1]) throw ValidationError("scheduler.milestones must be strictly increasing");
  if (kind == SchedulerKind::step && step_size == 0) throw ValidationError("scheduler.step_size must be positive");
  if (kind == SchedulerKind::cosine && t_max == 0) throw ValidationError("scheduler.t_max must be positive");
}

namespace {

double decay(double lr, double gamma, std::size_t times) {
  const double inv = 1.0 / gamma;
  const double rounded = std::round(inv);
  if (std::abs(inv - rounded) < 1e-12 * inv) {
    for (std::size_t i = 0; i < times; ++i) lr /= rounded;
  } else {
    for (std::size_t i = 0; i < times; ++i) lr *= gamma;
  }
  return lr;
}

}  // namespace

double lr_at(const SchedulerSpec& spec, double initial_lr, std::size_t epoch) {
  switch (spec.kind) {
    case SchedulerKind::multistep: {
      const auto passed = static_cast<std::size_t>(
          std::count_if(spec.milestones.begin(), spec.milestones.end(), [&](std::size_t m) { return m <= epoch; }));
      return decay(initial_lr, spec.gamma, passed);
    }
    case SchedulerKind::step:
      return decay(initial_lr, spec.gamma, epoch / spec.step_size);
    case SchedulerKind::cosine: {
      const double t = static_cast<double>(std::min(epoch, spec.t_max)) / static_cast<double>(spec.t_max);
      return spec.eta_min + 0.5 * (initial_lr - spec.eta_min) * (1.0 + std::cos(std::numbers::pi * t));
    }
  }
  return initial_lr;
}

void TrainConfig::validate() const {
  if (batch_size == 0) throw ValidationError("train.batch_size must be positive");
  if (!(initial_lr > 0.0)) throw ValidationError("train.initial_lr must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ValidationError("train.momentum must be in [0, 1)");
  if (!(weight_decay >= 0.0)) throw ValidationError("train.weight_decay must be >= 0");
  scheduler.validate();
}

TradesConfig TradesConfig::with_epsilon(double epsilon) {
  TradesConfig t;
  t.inner_attack.epsilon = epsilon;
  t.inner_attack.steps = 10;
  t.inner_attack.random_start = true;
  t.inner_attack.objective = AttackObjective::kl_to_clean;
  return t;
}

void TradesConfig::validate() const {
  if (!(beta >= 0.0)) throw ValidationError("trades.beta must be >= 0");
  if (inner_attack.objective != AttackObjective::kl_to_clean) {
    throw ValidationError("trades inner attack must maximise the KL divergence to the clean prediction");
  }
  inner_attack.validate();
}

void sgd_step(Model& model, std::span<const std::span<const double>> grads, double lr, double momentum,
              double weight_decay, SgdState& state) {
  auto params = model.parameters();
  if (grads.size() != params.size()) {
    throw ShapeError("sgd_step: " + std::to_string(grads.size()) + " gradients for " + std::to_string(params.size()) +
                     " parameters");
  }
  if (state.velocity.size() != params.size()) {
    state.velocity.assign(params.size(), {});
    for (std::size_t i = 0; i < params.size(); ++i) state.velocity[i].assign(params[i].tensor.numel(), 0.0);
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto w = params[i].tensor.mutable_values();
    auto& v = state.velocity[i];
    const auto g = grads[i];
    if (!g.empty() && g.size() != w.size()) {
      throw ShapeError("sgd_step: gradient for '" + params[i].name + "' has " + std::to_string(g.size()) +
                       " entries, parameter has " + std::to_string(w.size()));
    }
    if (v.size() != w.size()) throw ShapeError("sgd_step: velocity for '" + params[i].name + "' is misaligned");
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double d = (g.empty() ? 0.0 : g[k]) + weight_decay * w[k];
      v[k] = momentum * v[k] + d;
      w[k] -= lr * v[k];
    }
  }
}

std::vector<double> input_gradient_norms(const Model& model, const Dataset& data, std::size_t shard_rows) {
  const std::size_t n = data.size(), d = data.dim();
  std::vector<double> norms(n, 0.0);
  parallel_for_shards(n, shard_rows, [&](std::size_t begin, std::size_t end) {
    std::vector<std::size_t> rows(end - begin);
    std::iota(rows.begin(), rows.end(), begin);
    Tape tape;
    Tensor x = data.gather_rows(rows);
    Tensor leaf = Tensor::from(x.shape(), {x.values().begin(), x.values().end()}, true);
    const auto labels = data.gather_labels(rows);
    // Summed loss: row i's input gradient is exactly grad of its own loss.
    Tensor loss = tape.softmax_cross_entropy(model.forward(tape, leaf, ParamMode::frozen), labels, Reduction::sum);
    tape.backward(loss);
    auto g = leaf.grad();
    for (std::size_t i = 0; i < rows.size(); ++i) {
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) s += g[i * d + k] * g[i * d + k];
      norms[begin + i] = std::sqrt(s);
    }
  });
  return norms;
}

double accuracy(const Model& model, const Dataset& data) {
  if (data.size() == 0) return 0.0;
  std::vector<std::uint8_t> correct(data.size(), 0);
  parallel_for_shards(data.size(), 1024, [&](std::size_t begin, std::size_t end) {
    std::vector<std::size_t> rows(end - begin);
    std::iota(rows.begin(), rows.end(), begin);
    const auto pred = predict(model, data.gather_rows(rows));
    for (std::size_t i = 0; i < rows.size(); ++i) correct[begin + i] = pred[i] == data.labels[begin + i];
  });
  return static_cast<double>(std::accumulate(correct.begin(), correct.end(), std::size_t{0})) /
         static_cast<double>(data.size());
}

namespace {

struct BatchOutput {
  Tensor loss;
  Tensor clean_logits;
};

using BatchLossFn = std::function<BatchOutput(Tape& tape, const Model& model, const Tensor& x,
                                              std::span<const int> labels, std::span<const std::size_t> ids,
                                              std::size_t epoch)>;

std::vector<std::size_t> shuffled_positions(std::size_t n, std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  CounterRng rng(derive_seed(derive_seed(seed, "shuffle"), epoch));
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i));
    std::swap(perm[i - 1], perm[j]);
  }
  return perm;
}

TrainResult run_training(Model model, const Dataset& data, const TrainConfig& config, const TrainHooks& hooks,
                         const BatchLossFn& batch_loss) {
  config.validate();
  if (data.size() == 0) throw ValidationError("cannot train on an empty dataset");
  if (data.dim() != model.config().input_dim) {
    throw ShapeError("dataset width " + std::to_string(data.dim()) + " does not match model input " +
                     std::to_string(model.config().input_dim));
  }

  TrainResult result{std::move(model), std::nullopt, {}, {}, {}};
  Model& m = result.model;
  if (config.record_aign) {
    result.ledger.emplace(data.ids, config.keep_aign_trajectory);
    for (const Dataset* probe : hooks.probes) result.probe_ledgers.emplace_back(probe->ids, config.keep_aign_trajectory);
  }
  if (config.checkpoint_every > 0) std::filesystem::create_directories(config.checkpoint_dir);

  SgdState state;
  const std::size_t n = data.size();
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = lr_at(config.scheduler, config.initial_lr, epoch);
    const auto perm = shuffled_positions(n, config.seed, epoch);
    double loss_sum = 0.0;
    std::size_t correct = 0;

    for (std::size_t start = 0, batch = 0; start < n; start += config.batch_size, ++batch) {
      const std::size_t end = std::min(n, start + config.batch_size);
      std::span<const std::size_t> rows(perm.data() + start, end - start);
      const Tensor xb = data.gather_rows(rows);
      const auto yb = data.gather_labels(rows);
      const auto ids = data.gather_ids(rows);

      m.zero_grad();
      Tape tape;
      BatchOutput out = batch_loss(tape, m, xb, yb, ids, epoch);
      const double loss = out.loss.item();
      if (!std::isfinite(loss)) {
        throw NumericError("non-finite training loss at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batch));
      }
      tape.backward(out.loss);
      const auto grads = m.gradients();
      sgd_step(m, grads, lr, config.momentum, config.weight_decay, state);

      loss_sum += loss * static_cast<double>(rows.size());
      const auto pred = argmax_rows(out.clean_logits);
      for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == yb[i];
    }

    result.log.push_back({epoch, lr, loss_sum / static_cast<double>(n),
                          static_cast<double>(correct) / static_cast<double>(n)});

    if (config.record_aign) {
      result.ledger->record_epoch(input_gradient_norms(m, data));
      for (std::size_t p = 0; p < hooks.probes.size(); ++p)
        result.probe_ledgers[p].record_epoch(input_gradient_norms(m, *hooks.probes[p]));
    }
    if (config.checkpoint_every > 0 && (epoch + 1) % config.checkpoint_every == 0) {
      char name[32];
      std::snprintf(name, sizeof name, "epoch_%04zu.ezc", epoch);
      auto path = config.checkpoint_dir / name;
      save_checkpoint(m, path);
      result.checkpoints.push_back(path);
    }
    if (hooks.on_epoch_end) hooks.on_epoch_end(epoch, m);
  }
  // Leave no stale gradients on the returned parameters.
  for (auto& p : m.parameters()) p.tensor.clear_grad();
  return result;
}

}  // namespace

TrainResult train_standard(Model model, const Dataset& data, const TrainConfig& config, const TrainHooks& hooks) {
  return run_training(std::move(model), data, config, hooks,
                      [](Tape& tape, const Model& m, const Tensor& x, std::span<const int> y,
                         std::span<const std::size_t>, std::size_t) {
                        Tensor logits = m.forward(tape, x, ParamMode::trainable);
                        return BatchOutput{tape.softmax_cross_entropy(logits, y), logits};
                      });
}

namespace {

BatchOutput trades_batch(Tape& tape, const Model& model, const Tensor& x, std::span<const int> labels,
                         const TradesConfig& cfg, std::span<const std::size_t> keys) {
  const Tensor x_adv = pgd(model, x, labels, cfg.inner_attack, keys);
  Tensor clean = model.forward(tape, x, ParamMode::trainable);
  Tensor ce = tape.softmax_cross_entropy(clean, labels);
  Tensor adv = model.forward(tape, x_adv, ParamMode::trainable);
  Tensor kl = tape.kl_divergence(adv, clean);
  return {tape.add(ce, tape.scale(kl, cfg.beta)), clean};
}

}  // namespace

Tensor trades_loss(Tape& tape, const Model& model, const Tensor& x, std::span<const int> labels,
                   const TradesConfig& cfg, std::span<const std::size_t> sample_keys) {
  cfg.validate();
  return trades_batch(tape, model, x, labels, cfg, sample_keys).loss;
}

TrainResult train_trades(Model model, const Dataset& data, const TrainConfig& config, const TradesConfig& trades,
                         const TrainHooks& hooks) {
  trades.validate();
  return run_training(std::move(model), data, config, hooks,
                      [&trades](Tape& tape, const Model& m, const Tensor& x, std::span<const int> y,
                                std::span<const std::size_t> ids, std::size_t epoch) {
                        TradesConfig per_epoch = trades;
                        per_epoch.inner_attack.start_seed = derive_seed(trades.inner_attack.start_seed, epoch);
                        return trades_batch(tape, m, x, y, per_epoch, ids);
                      });
}

AignLedger aign_from_checkpoints(std::span<const std::filesystem::path> checkpoints, const Dataset& data,
                                 bool keep_trajectory) {
  AignLedger ledger(data.ids, keep_trajectory);
  for (const auto& path : checkpoints) ledger.record_epoch(input_gradient_norms(load_checkpoint(path), data));
  return ledger;
}

void write_train_log_csv(std::span<const EpochLog> log, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write training log " + path.string());
  out << "epoch,lr,mean_loss,train_accuracy\n";
  for (const auto& e : log) {
    out << e.epoch << ',' << format_double(e.lr) << ',' << format_double(e.mean_loss) << ','
        << format_double(e.train_accuracy) << '\n';
  }
  if (!out) throw IoError("failed writing training log " + path.string());
}

}  // namespace easycore
