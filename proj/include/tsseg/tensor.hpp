#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace tsseg {

using Shape = std::vector<std::size_t>;

/// Raised when tensor shapes do not line up for an operation.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a computation produces NaN or Inf.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string shape_to_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

/// Dense row-major array. Activations use the layout [batch, length, channels],
/// so element (b, t, c) lives at b*L*C + t*C + c.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T{0});
  Tensor(Shape shape, std::vector<T> data);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const;
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }
  const std::vector<T>& storage() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  // Rank-3 accessors for the [B, L, C] activation layout.
  T& at(std::size_t b, std::size_t t, std::size_t c) {
    return data_[(b * shape_[1] + t) * shape_[2] + c];
  }
  const T& at(std::size_t b, std::size_t t, std::size_t c) const {
    return data_[(b * shape_[1] + t) * shape_[2] + c];
  }

  void fill(T value);
  void reshape(Shape shape);
  bool all_finite() const;
  /// Throws NumericError naming `what` if any element is NaN or Inf.
  void require_finite(const char* what) const;

  bool operator==(const Tensor& other) const = default;

 private:
  Shape shape_;
  std::vector<T> data_;
};

/// Converts between precisions element by element.
template <typename To, typename From>
Tensor<To> tensor_cast(const Tensor<From>& src) {
  std::vector<To> out(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) out[i] = static_cast<To>(src[i]);
  return Tensor<To>(src.shape(), std::move(out));
}

/// Trainable parameter with its gradient and Adam moment buffers.
template <typename T>
struct Param {
  Tensor<T> value;
  Tensor<T> grad;
  Tensor<T> adam_m;
  Tensor<T> adam_v;
  std::int64_t step_count = 0;
  double lr_multiplier = 1.0;
  bool frozen = false;

  Param() = default;
  explicit Param(Shape shape);
  explicit Param(Tensor<T> initial);

  void zero_grad() { grad.fill(T{0}); }
  /// Drops optimizer state, keeping the value.
  void reset_optimizer();
  std::size_t size() const { return value.size(); }
};

extern template class Tensor<float>;
extern template class Tensor<double>;
extern template struct Param<float>;
extern template struct Param<double>;

}  // namespace tsseg
