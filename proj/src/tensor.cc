// Copyright 2026 The molalign Authors.
// SPDX-License-Identifier: Apache-2.0

#include "molalign/tensor.h"

#include <cmath>
#include <cstring>
#include <sstream>

namespace molalign {

namespace {

const char *kind_name(TensorErrorKind kind) {
  switch (kind) {
    case TensorErrorKind::kShapeMismatch: return "ShapeMismatch";
    case TensorErrorKind::kNonFiniteValue: return "NonFiniteValue";
    case TensorErrorKind::kNonScalarLoss: return "NonScalarLoss";
    case TensorErrorKind::kBackwardTwice: return "BackwardTwice";
    case TensorErrorKind::kIndexOutOfRange: return "IndexOutOfRange";
  }
  return "TensorError";
}

}  // namespace

TensorError::TensorError(TensorErrorKind kind, std::string op, const std::string &detail)
    : std::runtime_error(std::string(kind_name(kind)) + " in " + op +
                         (detail.empty() ? "" : ": " + detail)),
      kind_(kind),
      op_(std::move(op)) {}

std::string shape_string(const Shape &shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape &shape) {
  std::size_t n = 1;
  for (std::size_t s : shape) n *= s;
  return n;
}

Tensor::Tensor() : data_(1, 0.0) {}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_numel(shape_) != data_.size()) {
    throw TensorError(TensorErrorKind::kShapeMismatch, "Tensor",
                      "shape " + shape_string(shape_) + " does not hold " +
                          std::to_string(data_.size()) + " values");
  }
}

Tensor Tensor::scalar(double value) { return Tensor({}, std::vector<double>{value}); }

Tensor Tensor::vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor({n}, std::move(values));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto &row : rows) {
    if (row.size() != c) {
      throw TensorError(TensorErrorKind::kShapeMismatch, "Tensor::matrix", "ragged rows");
    }
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(data));
}

Tensor Tensor::zeros_like(const Tensor &other) { return Tensor(other.shape(), 0.0); }

std::span<const double> Tensor::row(std::size_t r) const {
  const std::size_t c = shape_.at(1);
  return std::span<const double>(data_).subspan(r * c, c);
}

std::span<double> Tensor::row(std::size_t r) {
  const std::size_t c = shape_.at(1);
  return std::span<double>(data_).subspan(r * c, c);
}

double Tensor::item() const {
  if (data_.size() != 1) {
    throw TensorError(TensorErrorKind::kShapeMismatch, "item",
                      "tensor of shape " + shape_string(shape_) + " is not a scalar");
  }
  return data_[0];
}

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

bool Tensor::operator==(const Tensor &other) const {
  return shape_ == other.shape_ &&
         (data_.empty() ||
          std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(double)) == 0);
}

}  // namespace molalign
