#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "easycore/tensor.hpp"

namespace easycore {

enum class OpKind {
  matmul,                 // [m x k] . [k x n]
  add,                    // same shape, or [m x n] + row vector [n]
  relu,
  residual_add,           // x + f(x), shapes must match exactly
  softmax_cross_entropy,  // logits [B x C] + labels -> scalar
  kl_divergence,          // KL(softmax(a) || softmax(b)) averaged over rows -> scalar
  scale,                  // multiply by attrs.factor
  sum,                    // all elements -> scalar
};

std::string_view to_string(OpKind kind);
/// Throws ValidationError("unknown operation kind ...").
OpKind parse_op_kind(std::string_view name);

enum class Reduction { mean, sum };

struct OpAttributes {
  std::vector<int> labels;  // softmax_cross_entropy
  double factor = 1.0;      // scale
  Reduction reduction = Reduction::mean;
};

/// Records operations whose operands require gradients and replays them in
/// reverse to accumulate gradients.
///
/// Leaf gradients (tensors not produced by this tape) accumulate across
/// backward calls; intermediate gradients are recomputed on every call. A tape
/// and everything recorded on it belong to one thread.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Tensor apply(OpKind kind, std::span<const Tensor> operands, const OpAttributes& attrs = {});

  /// Populates grads of every requires_grad tensor reachable from `loss`.
  /// Leaves recorded on the tape but unreachable from `loss` get zero grads.
  void backward(const Tensor& loss);

  /// Drops all recorded nodes. Tensors produced before the reset become leaves.
  void reset();

  std::size_t size() const { return nodes_.size(); }
  bool produced(const Tensor& t) const;

  Tensor matmul(const Tensor& a, const Tensor& b);
  Tensor add(const Tensor& a, const Tensor& b);
  Tensor relu(const Tensor& x);
  Tensor residual_add(const Tensor& x, const Tensor& fx);
  Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> labels,
                               Reduction reduction = Reduction::mean);
  Tensor kl_divergence(const Tensor& adv_logits, const Tensor& clean_logits);
  Tensor scale(const Tensor& x, double factor);
  Tensor sum(const Tensor& x);

 private:
  struct Node {
    OpKind kind;
    std::vector<Tensor> operands;
    Tensor output;
    OpAttributes attrs;
    std::vector<double> cache;  // softmax probabilities etc.
  };

  bool is_intermediate(const Tensor& t) const;
  void backward_node(Node& node);

  std::vector<Node> nodes_;
  std::size_t generation_ = 1;
};

/// Evaluates an operation without recording it.
Tensor op_forward(OpKind kind, std::span<const Tensor> operands, const OpAttributes& attrs = {});

/// Row-wise softmax of a [B x C] matrix.
std::vector<double> softmax_rows(const Tensor& logits);

/// Builds a scalar loss on `tape` from `point`.
using ScalarProgram = std::function<Tensor(Tape& tape, const Tensor& point)>;

/// Max over coordinates of |analytic - central| / max(|analytic|, |central|, 1e-12),
/// where the analytic gradient comes from backward and `central` uses step h.
/// Throws NumericError when any evaluation is non-finite.
double finite_diff_check(const ScalarProgram& program, const Tensor& point, double h);

}  // namespace easycore
