#include "easycore/tensor.hpp"

#include <algorithm>
#include <functional>
#include <numeric>

#include "easycore/error.hpp"

namespace easycore {

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_to_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return from(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape_numel(shape) != values.size()) {
    throw ShapeError("tensor shape " + shape_to_string(shape) + " holds " +
                     std::to_string(shape_numel(shape)) + " values, got " +
                     std::to_string(values.size()));
  }
  auto impl = std::make_shared<Impl>();
  impl->shape = std::move(shape);
  impl->values = std::make_shared<std::vector<double>>(std::move(values));
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from({1}, {value}, requires_grad);
}

Tensor::Impl& Tensor::impl() const {
  if (!impl_) throw Error("use of an undefined tensor");
  return *impl_;
}

const Shape& Tensor::shape() const { return impl().shape; }
std::size_t Tensor::numel() const { return impl().values->size(); }

std::size_t Tensor::rows() const {
  if (rank() != 2) throw ShapeError("expected a matrix, got shape " + shape_to_string(shape()));
  return shape()[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw ShapeError("expected a matrix, got shape " + shape_to_string(shape()));
  return shape()[1];
}

std::span<const double> Tensor::values() const { return *impl().values; }
std::span<double> Tensor::mutable_values() { return *impl().values; }

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_to_string(shape()));
  return (*impl().values)[0];
}

double Tensor::at(std::size_t row, std::size_t col) const {
  return (*impl().values)[row * cols() + col];
}

bool Tensor::requires_grad() const { return impl().requires_grad; }
bool Tensor::has_grad() const { return !impl().grad.empty() || numel() == 0; }
std::span<const double> Tensor::grad() const { return impl().grad; }

std::span<double> Tensor::mutable_grad() {
  auto& im = impl();
  if (im.grad.size() != im.values->size()) im.grad.assign(im.values->size(), 0.0);
  return im.grad;
}

void Tensor::zero_grad() {
  auto& im = impl();
  im.grad.assign(im.values->size(), 0.0);
}

void Tensor::clear_grad() {
  auto& im = impl();
  im.grad.clear();
  im.grad.shrink_to_fit();
}

Tensor Tensor::detached() const {
  auto impl_copy = std::make_shared<Impl>();
  impl_copy->shape = impl().shape;
  impl_copy->values = impl().values;
  return Tensor(std::move(impl_copy));
}

Tensor Tensor::clone() const {
  return from(shape(), std::vector<double>(values().begin(), values().end()), requires_grad());
}

bool Tensor::same_storage(const Tensor& other) const {
  return impl_ && other.impl_ && impl_->values == other.impl_->values;
}

}  // namespace easycore
