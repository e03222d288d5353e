#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "step/common.hpp"

namespace step {

// Dense row-major tensor of `real`. Value semantics throughout: copies
// copy the buffer. Rank is anything >= 0 but the toolkit only ever uses
// rank 0..4 ([batch, channel, time, joint] for network activations).
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape);  // zero-filled

  static Tensor zeros(std::vector<int> shape);
  static Tensor full(std::vector<int> shape, real value);
  static Tensor from(std::vector<int> shape, std::vector<real> values);
  static Tensor scalar(real value);

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int axis) const;
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  real* data() { return data_.data(); }
  const real* data() const { return data_.data(); }

  real& operator[](std::size_t i) { return data_[i]; }
  real operator[](std::size_t i) const { return data_[i]; }

  // Indexed access for the common ranks. Bounds are the caller's problem
  // (these are on hot paths); shapes are validated where tensors meet.
  real& at2(int i, int j) { return data_[flat2(i, j)]; }
  real at2(int i, int j) const { return data_[flat2(i, j)]; }
  real& at3(int i, int j, int k) { return data_[flat3(i, j, k)]; }
  real at3(int i, int j, int k) const { return data_[flat3(i, j, k)]; }
  real& at4(int i, int j, int k, int l) { return data_[flat4(i, j, k, l)]; }
  real at4(int i, int j, int k, int l) const { return data_[flat4(i, j, k, l)]; }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool all_finite() const;

  void fill(real value);
  void set_zero() { fill(real(0)); }

  std::string shape_str() const;
  static std::string shape_str(const std::vector<int>& shape);
  static std::size_t numel(const std::vector<int>& shape);

 private:
  std::size_t flat2(int i, int j) const {
    return static_cast<std::size_t>(i) * shape_[1] + j;
  }
  std::size_t flat3(int i, int j, int k) const {
    return (static_cast<std::size_t>(i) * shape_[1] + j) * shape_[2] + k;
  }
  std::size_t flat4(int i, int j, int k, int l) const {
    return ((static_cast<std::size_t>(i) * shape_[1] + j) * shape_[2] + k) *
               shape_[3] +
           l;
  }

  std::vector<int> shape_;
  std::vector<real> data_;
};

}  // namespace step
