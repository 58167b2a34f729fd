#include "easycore/autodiff.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "easycore/error.hpp"

namespace easycore {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

ConstMap as_matrix(std::span<const double> data, std::size_t rows, std::size_t cols) {
  return ConstMap(data.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

MutMap as_matrix(std::span<double> data, std::size_t rows, std::size_t cols) {
  return MutMap(data.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

[[noreturn]] void shape_mismatch(OpKind kind, const Tensor& a, const Tensor& b) {
  throw ShapeError(std::string(to_string(kind)) + ": incompatible shapes " +
                   shape_to_string(a.shape()) + " and " + shape_to_string(b.shape()));
}

void expect_arity(OpKind kind, std::span<const Tensor> operands, std::size_t n) {
  if (operands.size() != n) {
    throw ValidationError(std::string(to_string(kind)) + " expects " + std::to_string(n) +
                          " operands, got " + std::to_string(operands.size()));
  }
}

void expect_matrix(OpKind kind, const Tensor& t) {
  if (t.rank() != 2) {
    throw ShapeError(std::string(to_string(kind)) + ": expected a matrix, got shape " +
                     shape_to_string(t.shape()));
  }
}

bool is_row_broadcast(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2) return false;
  if (b.rank() == 1) return b.shape()[0] == a.shape()[1];
  return b.rank() == 2 && b.shape()[0] == 1 && b.shape()[1] == a.shape()[1];
}

// Row-wise log-softmax into `out` ([B x C]).
void log_softmax_rows(std::span<const double> logits, std::size_t rows, std::size_t cols,
                      std::span<double> out) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* z = logits.data() + r * cols;
    double* o = out.data() + r * cols;
    double mx = z[0];
    for (std::size_t c = 1; c < cols; ++c) mx = std::max(mx, z[c]);
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += std::exp(z[c] - mx);
    const double lse = mx + std::log(s);
    for (std::size_t c = 0; c < cols; ++c) o[c] = z[c] - lse;
  }
}

struct ForwardResult {
  Tensor output;
  std::vector<double> cache;
};

ForwardResult compute_forward(OpKind kind, std::span<const Tensor> ops, const OpAttributes& attrs) {
  switch (kind) {
    case OpKind::matmul: {
      expect_arity(kind, ops, 2);
      const Tensor& a = ops[0];
      const Tensor& b = ops[1];
      if (a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0]) shape_mismatch(kind, a, b);
      const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
      Tensor out = Tensor::zeros({m, n});
      if (k > 0 && m > 0 && n > 0) {
        as_matrix(out.mutable_values(), m, n).noalias() =
            as_matrix(a.values(), m, k) * as_matrix(b.values(), k, n);
      }
      return {out, {}};
    }
    case OpKind::add: {
      expect_arity(kind, ops, 2);
      const Tensor& a = ops[0];
      const Tensor& b = ops[1];
      Tensor out = Tensor::zeros(a.shape());
      auto o = out.mutable_values();
      auto av = a.values();
      auto bv = b.values();
      if (a.shape() == b.shape()) {
        for (std::size_t i = 0; i < o.size(); ++i) o[i] = av[i] + bv[i];
      } else if (is_row_broadcast(a, b)) {
        const std::size_t rows = a.shape()[0], cols = a.shape()[1];
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < cols; ++c) o[r * cols + c] = av[r * cols + c] + bv[c];
      } else {
        shape_mismatch(kind, a, b);
      }
      return {out, {}};
    }
    case OpKind::residual_add: {
      expect_arity(kind, ops, 2);
      if (ops[0].shape() != ops[1].shape()) shape_mismatch(kind, ops[0], ops[1]);
      Tensor out = Tensor::zeros(ops[0].shape());
      auto o = out.mutable_values();
      auto av = ops[0].values();
      auto bv = ops[1].values();
      for (std::size_t i = 0; i < o.size(); ++i) o[i] = av[i] + bv[i];
      return {out, {}};
    }
    case OpKind::relu: {
      expect_arity(kind, ops, 1);
      Tensor out = Tensor::zeros(ops[0].shape());
      auto o = out.mutable_values();
      auto x = ops[0].values();
      for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] > 0.0 ? x[i] : 0.0;
      return {out, {}};
    }
    case OpKind::scale: {
      expect_arity(kind, ops, 1);
      Tensor out = Tensor::zeros(ops[0].shape());
      auto o = out.mutable_values();
      auto x = ops[0].values();
      for (std::size_t i = 0; i < o.size(); ++i) o[i] = attrs.factor * x[i];
      return {out, {}};
    }
    case OpKind::sum: {
      expect_arity(kind, ops, 1);
      double s = 0.0;
      for (double v : ops[0].values()) s += v;
      return {Tensor::scalar(s), {}};
    }
    case OpKind::softmax_cross_entropy: {
      expect_arity(kind, ops, 1);
      const Tensor& logits = ops[0];
      expect_matrix(kind, logits);
      const std::size_t rows = logits.shape()[0], cols = logits.shape()[1];
      if (attrs.labels.size() != rows) {
        throw ShapeError("softmax_cross_entropy: " + std::to_string(attrs.labels.size()) +
                         " labels for logits of shape " + shape_to_string(logits.shape()));
      }
      if (rows == 0) throw ShapeError("softmax_cross_entropy: empty batch");
      std::vector<double> logp(rows * cols);
      log_softmax_rows(logits.values(), rows, cols, logp);
      double total = 0.0;
      for (std::size_t r = 0; r < rows; ++r) {
        const int y = attrs.labels[r];
        if (y < 0 || static_cast<std::size_t>(y) >= cols) {
          throw ValidationError("softmax_cross_entropy: label " + std::to_string(y) +
                                " outside [0, " + std::to_string(cols) + ")");
        }
        total -= logp[r * cols + static_cast<std::size_t>(y)];
      }
      if (attrs.reduction == Reduction::mean) total /= static_cast<double>(rows);
      for (double& v : logp) v = std::exp(v);  // cache probabilities
      return {Tensor::scalar(total), std::move(logp)};
    }
    case OpKind::kl_divergence: {
      expect_arity(kind, ops, 2);
      const Tensor& a = ops[0];
      const Tensor& b = ops[1];
      expect_matrix(kind, a);
      if (a.shape() != b.shape()) shape_mismatch(kind, a, b);
      const std::size_t rows = a.shape()[0], cols = a.shape()[1];
      if (rows == 0) throw ShapeError("kl_divergence: empty batch");
      // cache layout: log q (adv) | log p (clean) | per-row KL
      std::vector<double> cache(2 * rows * cols + rows);
      std::span<double> logq(cache.data(), rows * cols);
      std::span<double> logp(cache.data() + rows * cols, rows * cols);
      log_softmax_rows(a.values(), rows, cols, logq);
      log_softmax_rows(b.values(), rows, cols, logp);
      double total = 0.0;
      for (std::size_t r = 0; r < rows; ++r) {
        double kl = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
          const std::size_t i = r * cols + c;
          kl += std::exp(logq[i]) * (logq[i] - logp[i]);
        }
        cache[2 * rows * cols + r] = kl;
        total += kl;
      }
      return {Tensor::scalar(total / static_cast<double>(rows)), std::move(cache)};
    }
  }
  throw ValidationError("unknown operation kind");
}

}  // namespace

std::string_view to_string(OpKind kind) {
  switch (kind) {
    case OpKind::matmul: return "matmul";
    case OpKind::add: return "add";
    case OpKind::relu: return "relu";
    case OpKind::residual_add: return "residual-add";
    case OpKind::softmax_cross_entropy: return "softmax-cross-entropy";
    case OpKind::kl_divergence: return "kl-divergence";
    case OpKind::scale: return "scale";
    case OpKind::sum: return "sum";
  }
  return "?";
}

OpKind parse_op_kind(std::string_view name) {
  static constexpr std::array kinds = {OpKind::matmul, OpKind::add, OpKind::relu,
                                       OpKind::residual_add, OpKind::softmax_cross_entropy,
                                       OpKind::kl_divergence, OpKind::scale, OpKind::sum};
  for (OpKind k : kinds)
    if (to_string(k) == name) return k;
  throw ValidationError("unknown operation kind '" + std::string(name) + "'");
}

Tensor op_forward(OpKind kind, std::span<const Tensor> operands, const OpAttributes& attrs) {
  return compute_forward(kind, operands, attrs).output;
}

std::vector<double> softmax_rows(const Tensor& logits) {
  const std::size_t rows = logits.rows(), cols = logits.cols();
  std::vector<double> out(rows * cols);
  log_softmax_rows(logits.values(), rows, cols, out);
  for (double& v : out) v = std::exp(v);
  return out;
}

bool Tape::produced(const Tensor& t) const { return is_intermediate(t); }

bool Tape::is_intermediate(const Tensor& t) const {
  const auto& im = t.impl();
  return im.producer == this && im.producer_generation == generation_ && im.node < nodes_.size();
}

Tensor Tape::apply(OpKind kind, std::span<const Tensor> operands, const OpAttributes& attrs) {
  ForwardResult fr = compute_forward(kind, operands, attrs);
  const bool track = std::any_of(operands.begin(), operands.end(),
                                 [](const Tensor& t) { return t.requires_grad(); });
  if (!track) return fr.output;

  auto& im = fr.output.impl();
  im.requires_grad = true;
  im.producer = this;
  im.producer_generation = generation_;
  im.node = nodes_.size();
  nodes_.push_back(Node{kind, std::vector<Tensor>(operands.begin(), operands.end()), fr.output,
                        attrs, std::move(fr.cache)});
  return fr.output;
}

void Tape::reset() {
  nodes_.clear();
  ++generation_;
}

void Tape::backward(const Tensor& loss) {
  if (loss.numel() != 1) {
    throw ShapeError("backward requires a scalar loss, got shape " + shape_to_string(loss.shape()));
  }
  // Leaves seen on the tape get a (possibly zero) gradient buffer.
  for (auto& node : nodes_)
    for (auto& op : node.operands)
      if (op.requires_grad() && !is_intermediate(op)) op.mutable_grad();

  if (!is_intermediate(loss)) {
    // Loss is itself a leaf: d loss / d loss = 1.
    Tensor handle = loss;
    if (handle.requires_grad()) handle.mutable_grad()[0] += 1.0;
    return;
  }

  const std::size_t last = loss.impl().node;
  std::vector<char> reached(last + 1, 0);
  for (std::size_t i = 0; i <= last; ++i) nodes_[i].output.clear_grad();
  nodes_[last].output.zero_grad();
  nodes_[last].output.mutable_grad()[0] = 1.0;
  reached[last] = 1;

  for (std::size_t i = last + 1; i-- > 0;) {
    if (!reached[i]) continue;
    backward_node(nodes_[i]);
    for (auto& op : nodes_[i].operands)
      if (is_intermediate(op)) reached[op.impl().node] = 1;
  }
}

void Tape::backward_node(Node& node) {
  std::span<const double> g = node.output.grad();
  auto wants = [](const Tensor& t) { return t.requires_grad(); };

  switch (node.kind) {
    case OpKind::matmul: {
      Tensor& a = node.operands[0];
      Tensor& b = node.operands[1];
      const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
      if (m == 0 || k == 0 || n == 0) return;
      auto gm = as_matrix(g, m, n);
      if (wants(a)) as_matrix(a.mutable_grad(), m, k).noalias() += gm * as_matrix(b.values(), k, n).transpose();
      if (wants(b)) as_matrix(b.mutable_grad(), k, n).noalias() += as_matrix(a.values(), m, k).transpose() * gm;
      return;
    }
    case OpKind::add: {
      Tensor& a = node.operands[0];
      Tensor& b = node.operands[1];
      if (wants(a)) {
        auto ga = a.mutable_grad();
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i];
      }
      if (wants(b)) {
        auto gb = b.mutable_grad();
        if (a.shape() == b.shape()) {
          for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[i];
        } else {
          const std::size_t rows = a.shape()[0], cols = a.shape()[1];
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) gb[c] += g[r * cols + c];
        }
      }
      return;
    }
    case OpKind::residual_add: {
      for (Tensor& op : node.operands) {
        if (!wants(op)) continue;
        auto go = op.mutable_grad();
        for (std::size_t i = 0; i < go.size(); ++i) go[i] += g[i];
      }
      return;
    }
    case OpKind::relu: {
      Tensor& x = node.operands[0];
      if (!wants(x)) return;
      auto gx = x.mutable_grad();
      auto xv = x.values();
      // Subgradient at 0 is 0.
      for (std::size_t i = 0; i < gx.size(); ++i)
        if (xv[i] > 0.0) gx[i] += g[i];
      return;
    }
    case OpKind::scale: {
      Tensor& x = node.operands[0];
      if (!wants(x)) return;
      auto gx = x.mutable_grad();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += node.attrs.factor * g[i];
      return;
    }
    case OpKind::sum: {
      Tensor& x = node.operands[0];
      if (!wants(x)) return;
      auto gx = x.mutable_grad();
      for (double& v : gx) v += g[0];
      return;
    }
    case OpKind::softmax_cross_entropy: {
      Tensor& logits = node.operands[0];
      if (!wants(logits)) return;
      const std::size_t rows = logits.shape()[0], cols = logits.shape()[1];
      const double s = node.attrs.reduction == Reduction::mean ? g[0] / static_cast<double>(rows) : g[0];
      auto gl = logits.mutable_grad();
      const auto& p = node.cache;
      for (std::size_t r = 0; r < rows; ++r) {
        const auto y = static_cast<std::size_t>(node.attrs.labels[r]);
        for (std::size_t c = 0; c < cols; ++c) {
          const std::size_t i = r * cols + c;
          gl[i] += s * (p[i] - (c == y ? 1.0 : 0.0));
        }
      }
      return;
    }
    case OpKind::kl_divergence: {
      Tensor& a = node.operands[0];
      Tensor& b = node.operands[1];
      const std::size_t rows = a.shape()[0], cols = a.shape()[1];
      const double s = g[0] / static_cast<double>(rows);
      const double* logq = node.cache.data();
      const double* logp = node.cache.data() + rows * cols;
      const double* kl = node.cache.data() + 2 * rows * cols;
      if (wants(a)) {
        // d/da_k = q_k * (log q_k - log p_k - KL)
        auto ga = a.mutable_grad();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < cols; ++c) {
            const std::size_t i = r * cols + c;
            ga[i] += s * std::exp(logq[i]) * (logq[i] - logp[i] - kl[r]);
          }
      }
      if (wants(b)) {
        // d/db_k = p_k - q_k
        auto gb = b.mutable_grad();
        for (std::size_t i = 0; i < rows * cols; ++i) gb[i] += s * (std::exp(logp[i]) - std::exp(logq[i]));
      }
      return;
    }
  }
}

Tensor Tape::matmul(const Tensor& a, const Tensor& b) {
  const std::array ops{a, b};
  return apply(OpKind::matmul, ops);
}

Tensor Tape::add(const Tensor& a, const Tensor& b) {
  const std::array ops{a, b};
  return apply(OpKind::add, ops);
}

Tensor Tape::relu(const Tensor& x) {
  const std::array ops{x};
  return apply(OpKind::relu, ops);
}

Tensor Tape::residual_add(const Tensor& x, const Tensor& fx) {
  const std::array ops{x, fx};
  return apply(OpKind::residual_add, ops);
}

Tensor Tape::softmax_cross_entropy(const Tensor& logits, std::span<const int> labels, Reduction reduction) {
  OpAttributes attrs;
  attrs.labels.assign(labels.begin(), labels.end());
  attrs.reduction = reduction;
  const std::array ops{logits};
  return apply(OpKind::softmax_cross_entropy, ops, attrs);
}

Tensor Tape::kl_divergence(const Tensor& adv_logits, const Tensor& clean_logits) {
  const std::array ops{adv_logits, clean_logits};
  return apply(OpKind::kl_divergence, ops);
}

Tensor Tape::scale(const Tensor& x, double factor) {
  OpAttributes attrs;
  attrs.factor = factor;
  const std::array ops{x};
  return apply(OpKind::scale, ops, attrs);
}

Tensor Tape::sum(const Tensor& x) {
  const std::array ops{x};
  return apply(OpKind::sum, ops);
}

double finite_diff_check(const ScalarProgram& program, const Tensor& point, double h) {
  if (!(h > 0.0)) throw ValidationError("finite_diff_check: step h must be positive");

  Tensor leaf = Tensor::from(point.shape(), std::vector<double>(point.values().begin(), point.values().end()),
                             /*requires_grad=*/true);
  std::vector<double> analytic;
  {
    Tape tape;
    Tensor loss = program(tape, leaf);
    if (!std::isfinite(loss.item())) throw NumericError("finite_diff_check: non-finite program value");
    tape.backward(loss);
    auto g = leaf.has_grad() ? leaf.grad() : std::span<const double>{};
    analytic.assign(leaf.numel(), 0.0);
    std::copy(g.begin(), g.end(), analytic.begin());
  }

  auto eval = [&](const std::vector<double>& x) {
    Tape tape;
    const double v = program(tape, Tensor::from(point.shape(), x)).item();
    if (!std::isfinite(v)) throw NumericError("finite_diff_check: non-finite program value");
    return v;
  };

  std::vector<double> x(point.values().begin(), point.values().end());
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + h;
    const double fp = eval(x);
    x[i] = orig - h;
    const double fm = eval(x);
    x[i] = orig;
    const double central = (fp - fm) / (2.0 * h);
    const double denom = std::max({std::abs(analytic[i]), std::abs(central), 1e-12});
    worst = std::max(worst, std::abs(analytic[i] - central) / denom);
  }
  return worst;
}

}  // namespace easycore
