#include "easycore/attack.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include "easycore/coreset.hpp"
#include "easycore/error.hpp"
#include "easycore/parallel.hpp"
#include "easycore/rng.hpp"

namespace easycore {

AttackObjective parse_attack_objective(std::string_view name) {
  if (name == "cross-entropy" || name == "cross_entropy") return AttackObjective::cross_entropy;
  if (name == "kl-to-clean" || name == "kl_to_clean") return AttackObjective::kl_to_clean;
  throw ValidationError("unknown attack objective '" + std::string(name) + "'");
}

std::string_view to_string(AttackObjective objective) {
  return objective == AttackObjective::cross_entropy ? "cross-entropy" : "kl-to-clean";
}

std::optional<ClipRange> AttackConfig::clip() const {
  if (!clip_min && !clip_max) return std::nullopt;
  return ClipRange{clip_min.value_or(-HUGE_VAL), clip_max.value_or(HUGE_VAL)};
}

void AttackConfig::validate() const {
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) throw ValidationError("attack.epsilon must be finite and >= 0");
  if (steps == 0) throw ValidationError("attack.steps must be positive");
  if (step_size && !(*step_size >= 0.0)) throw ValidationError("attack.step_size must be >= 0");
  if (clip_min && clip_max && !(*clip_min < *clip_max)) {
    throw ValidationError("attack.clip_min must be below attack.clip_max");
  }
}

namespace {

double sign(double g) { return g > 0.0 ? 1.0 : (g < 0.0 ? -1.0 : 0.0); }

void apply_clip(std::span<double> x, const std::optional<ClipRange>& clip) {
  if (!clip) return;
  for (double& v : x) v = std::clamp(v, clip->min, clip->max);
}

// Gradient of the attack objective with respect to the input batch.
std::vector<double> input_gradient(const Model& model, const std::vector<double>& x_adv, const Shape& shape,
                                   std::span<const int> labels, AttackObjective objective,
                                   const Tensor& clean_logits) {
  Tape tape;
  Tensor leaf = Tensor::from(shape, x_adv, true);
  Tensor logits = model.forward(tape, leaf, ParamMode::frozen);
  Tensor loss = objective == AttackObjective::cross_entropy
                    ? tape.softmax_cross_entropy(logits, labels, Reduction::sum)
                    : tape.kl_divergence(logits, clean_logits);
  tape.backward(loss);
  std::vector<double> g(leaf.grad().begin(), leaf.grad().end());
  for (double v : g)
    if (!std::isfinite(v)) throw NumericError("attack: non-finite input gradient");
  return g;
}

}  // namespace

Tensor fgsm(const Model& model, const Tensor& x, std::span<const int> labels, double epsilon,
            std::optional<ClipRange> clip) {
  if (!(epsilon >= 0.0)) throw ValidationError("fgsm: epsilon must be >= 0");
  if (x.rank() != 2 || x.rows() != labels.size()) {
    throw ShapeError("fgsm: batch shape " + shape_to_string(x.shape()) + " vs " + std::to_string(labels.size()) +
                     " labels");
  }
  std::vector<double> xv(x.values().begin(), x.values().end());
  const auto g = input_gradient(model, xv, x.shape(), labels, AttackObjective::cross_entropy, Tensor());
  for (std::size_t i = 0; i < xv.size(); ++i) xv[i] = xv[i] + epsilon * sign(g[i]);
  apply_clip(xv, clip);
  return Tensor::from(x.shape(), std::move(xv));
}

Tensor pgd(const Model& model, const Tensor& x, std::span<const int> labels, const AttackConfig& cfg,
           std::span<const std::size_t> sample_keys) {
  cfg.validate();
  if (x.rank() != 2 || x.rows() != labels.size()) {
    throw ShapeError("pgd: batch shape " + shape_to_string(x.shape()) + " vs " + std::to_string(labels.size()) +
                     " labels");
  }
  if (!sample_keys.empty() && sample_keys.size() != x.rows()) throw ShapeError("pgd: sample key count mismatch");

  const std::size_t rows = x.rows(), cols = x.cols();
  const auto x0 = x.values();
  const double eps = cfg.epsilon;
  const double step = cfg.effective_step_size();
  const auto clip = cfg.clip();

  std::vector<double> lo(x0.size()), hi(x0.size());
  for (std::size_t i = 0; i < x0.size(); ++i) {
    lo[i] = x0[i] - eps;
    hi[i] = x0[i] + eps;
  }

  std::vector<double> xa(x0.begin(), x0.end());
  if (cfg.random_start) {
    for (std::size_t r = 0; r < rows; ++r) {
      const std::uint64_t key = sample_keys.empty() ? r : sample_keys[r];
      CounterRng rng(derive_seed(derive_seed(cfg.start_seed, "attack-start"), key));
      for (std::size_t c = 0; c < cols; ++c) {
        const std::size_t i = r * cols + c;
        xa[i] = std::clamp(x0[i] + rng.uniform(-eps, eps), lo[i], hi[i]);
      }
    }
    apply_clip(xa, clip);
  }

  Tensor clean_logits;
  if (cfg.objective == AttackObjective::kl_to_clean) clean_logits = forward_logits(model, x);

  for (std::size_t it = 0; it < cfg.steps; ++it) {
    const auto g = input_gradient(model, xa, x.shape(), labels, cfg.objective, clean_logits);
    for (std::size_t i = 0; i < xa.size(); ++i) xa[i] = std::clamp(xa[i] + step * sign(g[i]), lo[i], hi[i]);
    apply_clip(xa, clip);
  }
  return Tensor::from(x.shape(), std::move(xa));
}

AdversarialResult adversarial_accuracy(const Model& model, const Dataset& data, const AttackConfig& cfg,
                                       std::size_t batch_size) {
  cfg.validate();
  if (data.size() == 0) throw ValidationError("adversarial_accuracy: empty dataset");
  const std::size_t n = data.size(), d = data.dim();
  AdversarialResult res;
  res.ids = data.ids;
  res.clean_correct.assign(n, 0);
  res.adv_correct.assign(n, 0);
  res.linf.assign(n, 0.0);

  parallel_for_shards(n, std::max<std::size_t>(1, batch_size), [&](std::size_t begin, std::size_t end) {
    std::vector<std::size_t> rows(end - begin);
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = begin + i;
    const Tensor xb = data.gather_rows(rows);
    const auto yb = data.gather_labels(rows);
    const auto keys = data.gather_ids(rows);
    const auto clean_pred = predict(model, xb);
    const Tensor xadv = pgd(model, xb, yb, cfg, keys);
    const auto adv_pred = predict(model, xadv);
    auto a = xadv.values();
    auto c = xb.values();
    for (std::size_t i = 0; i < rows.size(); ++i) {
      res.clean_correct[begin + i] = clean_pred[i] == yb[i];
      res.adv_correct[begin + i] = adv_pred[i] == yb[i];
      double m = 0.0;
      for (std::size_t k = 0; k < d; ++k) m = std::max(m, std::abs(a[i * d + k] - c[i * d + k]));
      res.linf[begin + i] = m;
    }
  });

  std::size_t clean = 0, adv = 0;
  for (std::size_t i = 0; i < n; ++i) {
    clean += res.clean_correct[i];
    adv += res.adv_correct[i];
  }
  res.clean_accuracy = static_cast<double>(clean) / static_cast<double>(n);
  res.overall = static_cast<double>(adv) / static_cast<double>(n);
  return res;
}

void write_attack_csv(const AdversarialResult& result, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write attack file " + path.string());
  out << "id,clean_correct,adv_correct,linf_perturbation\n";
  for (std::size_t i = 0; i < result.ids.size(); ++i) {
    out << result.ids[i] << ',' << int(result.clean_correct[i]) << ',' << int(result.adv_correct[i]) << ','
        << format_double(result.linf[i]) << '\n';
  }
  if (!out) throw IoError("failed writing attack file " + path.string());
}

AdversarialResult read_attack_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open attack file " + path.string());
  std::string line;
  std::getline(in, line);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "id,clean_correct,adv_correct,linf_perturbation") {
    throw ValidationError(path.string() + ": not an attack result file");
  }
  AdversarialResult res;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string f[4];
    for (auto& s : f)
      if (!std::getline(ss, s, ',')) throw ValidationError(path.string() + ": short row '" + line + "'");
    res.ids.push_back(std::stoull(f[0]));
    res.clean_correct.push_back(static_cast<std::uint8_t>(std::stoi(f[1]) != 0));
    res.adv_correct.push_back(static_cast<std::uint8_t>(std::stoi(f[2]) != 0));
    res.linf.push_back(std::stod(f[3]));
  }
  if (res.ids.empty()) throw ValidationError(path.string() + " holds no rows");
  std::size_t clean = 0, adv = 0;
  for (std::size_t i = 0; i < res.ids.size(); ++i) {
    clean += res.clean_correct[i];
    adv += res.adv_correct[i];
  }
  res.clean_accuracy = static_cast<double>(clean) / static_cast<double>(res.ids.size());
  res.overall = static_cast<double>(adv) / static_cast<double>(res.ids.size());
  return res;
}

}  // namespace easycore
