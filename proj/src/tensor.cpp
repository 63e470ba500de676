#include "vidseq/tensor.hpp"

#include <algorithm>
#include <numeric>

#include "vidseq/errors.hpp"

namespace vidseq {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

namespace {

void check_shape(const Shape& shape) {
  if (shape.empty()) return;  // scalar
  for (auto d : shape) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_string(shape));
  }
}

}  // namespace

Tensor::Tensor(Shape shape, bool requires_grad)
    : Tensor(shape, std::vector<double>(shape_size(shape), 0.0), requires_grad) {}

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad)
    : impl_(std::make_shared<TensorImpl>()) {
  check_shape(shape);
  if (shape_size(shape) != data.size()) {
    throw DimensionError("shape " + shape_string(shape) + " holds " +
                         std::to_string(shape_size(shape)) + " values, got " +
                         std::to_string(data.size()));
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
  impl_->requires_grad = requires_grad;
  if (requires_grad) impl_->grad.assign(impl_->data.size(), 0.0);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(Shape{}, std::vector<double>{value}, requires_grad);
}

Tensor Tensor::filled(Shape shape, double value, bool requires_grad) {
  std::vector<double> data(shape_size(shape), value);
  return Tensor(std::move(shape), std::move(data), requires_grad);
}

double Tensor::item() const {
  if (size() != 1) throw DimensionError("item() on tensor of shape " + shape_string(shape()));
  return impl_->data[0];
}

void Tensor::zero_grad() {
  std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

Tensor Tensor::clone() const {
  return Tensor(impl_->shape, impl_->data, impl_->requires_grad);
}

Tensor Tensor::detach() const { return Tensor(impl_->shape, impl_->data, false); }

TimeMask::TimeMask(std::size_t max_time, std::vector<std::size_t> lengths)
    : max_time_(max_time), lengths_(std::move(lengths)) {
  if (lengths_.empty()) throw PreconditionError("time mask needs at least one item");
  for (std::size_t i = 0; i < lengths_.size(); ++i) {
    if (lengths_[i] == 0) {
      throw PreconditionError("item " + std::to_string(i) + " has zero valid frames");
    }
    if (lengths_[i] > max_time_) {
      throw PreconditionError("item " + std::to_string(i) + " length " +
                              std::to_string(lengths_[i]) + " exceeds max_time " +
                              std::to_string(max_time_));
    }
  }
}

TimeMask TimeMask::with_max_time(std::size_t max_time) const {
  return TimeMask(max_time, lengths_);
}

}  // namespace vidseq
