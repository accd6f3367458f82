// Copyright 2026 The molalign Authors.
// SPDX-License-Identifier: Apache-2.0

#ifndef MOLALIGN_TENSOR_H_
#define MOLALIGN_TENSOR_H_

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace molalign {

enum class TensorErrorKind {
  kShapeMismatch,
  kNonFiniteValue,
  kNonScalarLoss,
  kBackwardTwice,
  kIndexOutOfRange,
};

class TensorError : public std::runtime_error {
 public:
  TensorError(TensorErrorKind kind, std::string op, const std::string &detail);

  TensorErrorKind kind() const { return kind_; }
  const std::string &op() const { return op_; }

 private:
  TensorErrorKind kind_;
  std::string op_;
};

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape &shape);

// Dense row-major array of doubles. A default-constructed tensor is the
// scalar 0 (shape []).
class Tensor {
 public:
  Tensor();
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double value);
  static Tensor vector(std::vector<double> values);
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor zeros_like(const Tensor &other);

  const Shape &shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t numel() const { return data_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }

  // For rank-2 tensors.
  std::size_t rows() const { return shape_.at(0); }
  std::size_t cols() const { return shape_.at(1); }

  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }

  double &operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double &operator()(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

  std::span<const double> row(std::size_t r) const;
  std::span<double> row(std::size_t r);

  double item() const;
  bool all_finite() const;
  bool same_shape(const Tensor &other) const { return shape_ == other.shape_; }

  // Bitwise equality of shape and payload.
  bool operator==(const Tensor &other) const;

 private:
  Shape shape_;
  std::vector<double> data_;
};

std::size_t shape_numel(const Shape &shape);

}  // namespace molalign

#endif  // MOLALIGN_TENSOR_H_
