#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace vidseq {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  // Same length as data iff requires_grad.
  std::vector<double> grad;
  bool requires_grad = false;
};

/// Shared handle to a dense row-major double array. Copies alias the same
/// storage; use clone() for a deep copy.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, bool requires_grad = false);
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor filled(Shape shape, double value, bool requires_grad = false);

  bool defined() const noexcept { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return impl_->shape.at(axis); }
  std::size_t size() const { return impl_->data.size(); }

  std::span<const double> data() const { return impl_->data; }
  std::span<double> mutable_data() { return impl_->data; }
  double operator[](std::size_t i) const { return impl_->data[i]; }
  double item() const;

  bool requires_grad() const { return impl_->requires_grad; }
  std::span<const double> grad() const { return impl_->grad; }
  std::span<double> mutable_grad() { return impl_->grad; }
  void zero_grad();

  /// Deep copy of values, no graph history, same requires_grad flag.
  Tensor clone() const;
  /// Deep copy of values that never requires grad.
  Tensor detach() const;

  TensorImpl* impl() const noexcept { return impl_.get(); }
  const std::shared_ptr<TensorImpl>& shared_impl() const noexcept { return impl_; }

 private:
  std::shared_ptr<TensorImpl> impl_;
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

/// Valid frame counts for a padded batch laid out as batch x channels x time.
class TimeMask {
 public:
  TimeMask() = default;
  TimeMask(std::size_t max_time, std::vector<std::size_t> lengths);

  std::size_t batch() const noexcept { return lengths_.size(); }
  std::size_t max_time() const noexcept { return max_time_; }
  std::size_t length(std::size_t item) const { return lengths_.at(item); }
  const std::vector<std::size_t>& lengths() const noexcept { return lengths_; }
  bool valid(std::size_t item, std::size_t t) const { return t < lengths_[item]; }

  /// Same valid lengths with a larger padded time axis.
  TimeMask with_max_time(std::size_t max_time) const;

 private:
  std::size_t max_time_ = 0;
  std::vector<std::size_t> lengths_;
};

}  // namespace vidseq
