// Copyright 2026 The molalign Authors.
// SPDX-License-Identifier: Apache-2.0

// Reverse-mode differentiation over Tensor values.
//
// A Var is a handle to a node in a computation graph. Every op returns a new
// node whose value is computed eagerly; backward() walks the graph once in
// reverse topological order and accumulates gradients into every node that
// requires them. Node values are never mutated once the node is reachable
// from another node.

#ifndef MOLALIGN_AUTOGRAD_H_
#define MOLALIGN_AUTOGRAD_H_

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "molalign/tensor.h"

namespace molalign {

struct Node {
  std::string op;
  Tensor value;
  Tensor grad;  // allocated lazily; same shape as value
  bool requires_grad = false;
  bool grad_ready = false;
  bool backward_done = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node &)> backward_fn;

  // Adds `delta` into the gradient accumulator, allocating it if needed.
  void accumulate(const Tensor &delta);
  Tensor &grad_buffer();
};

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Var leaf(Tensor value, bool requires_grad = true);
  static Var constant(Tensor value) { return leaf(std::move(value), false); }

  const Tensor &value() const { return node_->value; }
  // Gradient accumulated by the last backward pass; zeros if none reached it.
  Tensor grad() const;
  bool requires_grad() const { return node_->requires_grad; }
  const Shape &shape() const { return node_->value.shape(); }
  Node *node() const { return node_.get(); }
  const std::shared_ptr<Node> &shared() const { return node_; }
  bool valid() const { return node_ != nullptr; }

  // Leaf-only mutation used between optimizer steps.
  void set_value(Tensor value);
  void zero_grad();

 private:
  std::shared_ptr<Node> node_;
};

// Accumulates d(loss)/d(node) into every reachable node requiring grad.
// Throws NonScalarLoss unless loss has a single element, and BackwardTwice on
// a second call for the same loss node.
void backward(const Var &loss);

namespace ops {

Var matmul(const Var &a, const Var &b);
Var transpose(const Var &a);

// Elementwise with broadcasting of `b` onto `a`: equal shapes, a scalar, or a
// row vector ([n] or [1,n]) onto an [m,n] matrix.
Var add(const Var &a, const Var &b);
Var sub(const Var &a, const Var &b);
Var mul(const Var &a, const Var &b);
Var scale(const Var &a, double factor);
Var add_scalar(const Var &a, double c);

Var relu(const Var &a);
Var tanh(const Var &a);
Var log(const Var &a);
Var exp(const Var &a);
Var square(const Var &a);

Var row_softmax(const Var &a);
Var row_log_softmax(const Var &a);

Var sum(const Var &a);
Var mean(const Var &a);
// axis 0 sums over rows (result [n]); axis 1 sums over columns (result [m]).
Var sum(const Var &a, std::size_t axis);
Var mean(const Var &a, std::size_t axis);

// Rows with norm below 1e-12 pass through unchanged (identity Jacobian) and
// are reported in `guarded` when given.
Var l2_normalize_rows(const Var &a, std::vector<bool> *guarded = nullptr);

// ||x_i||^2 + ||y_j||^2 - 2 x_i.y_j, clamped at zero.
Var pairwise_sq_dists(const Var &x, const Var &y);

Var gather_rows(const Var &a, std::span<const std::size_t> rows);
// out[k] = a(rows[k], cols[k])
Var gather_elements(const Var &a, std::span<const std::size_t> rows,
                    std::span<const std::size_t> cols);

}  // namespace ops

}  // namespace molalign

#endif  // MOLALIGN_AUTOGRAD_H_
