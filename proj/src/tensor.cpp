#include "tsseg/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace tsseg {

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ')';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_numel(shape_) != data_.size()) {
    throw ShapeError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                     shape_to_string(shape_));
  }
}

template <typename T>
std::size_t Tensor<T>::dim(std::size_t i) const {
  if (i >= shape_.size()) {
    throw ShapeError("dimension " + std::to_string(i) + " out of range for shape " + shape_to_string(shape_));
  }
  return shape_[i];
}

template <typename T>
void Tensor<T>::fill(T value) {
  std::fill(data_.begin(), data_.end(), value);
}

template <typename T>
void Tensor<T>::reshape(Shape shape) {
  if (shape_numel(shape) != data_.size()) {
    throw ShapeError("cannot reshape " + shape_to_string(shape_) + " to " + shape_to_string(shape));
  }
  shape_ = std::move(shape);
}

template <typename T>
bool Tensor<T>::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
}

template <typename T>
void Tensor<T>::require_finite(const char* what) const {
  if (!all_finite()) throw NumericError(std::string("non-finite values in ") + what);
}

template <typename T>
Param<T>::Param(Shape shape)
    : value(shape), grad(shape), adam_m(shape), adam_v(std::move(shape)) {}

template <typename T>
Param<T>::Param(Tensor<T> initial)
    : value(std::move(initial)), grad(value.shape()), adam_m(value.shape()), adam_v(value.shape()) {}

template <typename T>
void Param<T>::reset_optimizer() {
  grad.fill(T{0});
  adam_m.fill(T{0});
  adam_v.fill(T{0});
  step_count = 0;
}

template class Tensor<float>;
template class Tensor<double>;
template struct Param<float>;
template struct Param<double>;

}  // namespace tsseg
