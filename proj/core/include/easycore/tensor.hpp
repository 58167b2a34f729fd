#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace easycore {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

class Tape;

/// Dense row-major array of doubles with an optional gradient buffer.
///
/// Tensor is a shared handle: copies alias the same storage. `detached()`
/// returns a handle onto the same values that does not track gradients, which
/// is how read-only passes use model parameters without touching their grads.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }

  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;
  /// Rows/cols of a rank-2 tensor.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> values() const;
  std::span<double> mutable_values();
  double item() const;
  double at(std::size_t row, std::size_t col) const;

  bool requires_grad() const;
  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();
  void clear_grad();

  /// Same values, no gradient tracking, no tape linkage.
  Tensor detached() const;
  /// Deep copy of values; gradient flag copied, gradient buffer not.
  Tensor clone() const;

  bool same_storage(const Tensor& other) const;

 private:
  friend class Tape;

  struct Impl {
    Shape shape;
    std::shared_ptr<std::vector<double>> values;
    std::vector<double> grad;
    bool requires_grad = false;
    // Set when the tensor is the output of a recorded tape node.
    const Tape* producer = nullptr;
    std::size_t producer_generation = 0;
    std::size_t node = 0;
  };

  explicit Tensor(std::shared_ptr<Impl> impl) : impl_(std::move(impl)) {}
  Impl& impl() const;

  std::shared_ptr<Impl> impl_;
};

}  // namespace easycore
