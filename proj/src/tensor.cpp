#include "step/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace step {

std::size_t Tensor::numel(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    check_shape(d >= 0, "negative dimension in shape " + shape_str(shape));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

Tensor::Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
  data_.assign(numel(shape_), real(0));
}

Tensor Tensor::zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

Tensor Tensor::full(std::vector<int> shape, real value) {
  Tensor t(std::move(shape));
  t.fill(value);
  return t;
}

Tensor Tensor::from(std::vector<int> shape, std::vector<real> values) {
  check_shape(numel(shape) == values.size(),
              "value count " + std::to_string(values.size()) +
                  " does not match shape " + shape_str(shape));
  Tensor t;
  t.shape_ = std::move(shape);
  t.data_ = std::move(values);
  return t;
}

Tensor Tensor::scalar(real value) { return from({1}, {value}); }

int Tensor::dim(int axis) const {
  check_shape(axis >= 0 && axis < rank(),
              "axis " + std::to_string(axis) + " out of range for rank " +
                  std::to_string(rank()));
  return shape_[static_cast<std::size_t>(axis)];
}

bool Tensor::all_finite() const {
  for (real v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void Tensor::fill(real value) {
  std::fill(data_.begin(), data_.end(), value);
}

std::string Tensor::shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::string Tensor::shape_str() const { return shape_str(shape_); }

}  // namespace step
