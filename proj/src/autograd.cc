// Copyright 2026 The molalign Authors.
// SPDX-License-Identifier: Apache-2.0

#include "molalign/autograd.h"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace molalign {

void Node::accumulate(const Tensor &delta) {
  Tensor &g = grad_buffer();
  auto dst = g.data();
  auto src = delta.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

Tensor &Node::grad_buffer() {
  if (!grad_ready) {
    grad = Tensor::zeros_like(value);
    grad_ready = true;
  }
  return grad;
}

Var Var::leaf(Tensor value, bool requires_grad) {
  auto node = std::make_shared<Node>();
  node->op = "leaf";
  node->value = std::move(value);
  node->requires_grad = requires_grad;
  return Var(std::move(node));
}

Tensor Var::grad() const {
  if (node_->grad_ready) return node_->grad;
  return Tensor::zeros_like(node_->value);
}

void Var::set_value(Tensor value) {
  if (!value.same_shape(node_->value)) {
    throw TensorError(TensorErrorKind::kShapeMismatch, "set_value",
                      shape_string(node_->value.shape()) + " vs " + shape_string(value.shape()));
  }
  node_->value = std::move(value);
}

void Var::zero_grad() {
  node_->grad_ready = false;
  node_->grad = Tensor();
}

void backward(const Var &loss) {
  Node *root = loss.node();
  if (root->value.numel() != 1) {
    throw TensorError(TensorErrorKind::kNonScalarLoss, "backward",
                      "loss has shape " + shape_string(root->value.shape()));
  }
  if (root->backward_done) {
    throw TensorError(TensorErrorKind::kBackwardTwice, "backward",
                      "backward already ran for this loss");
  }
  root->backward_done = true;
  if (!root->requires_grad) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node *> order;
  std::unordered_set<Node *> seen;
  std::vector<std::pair<Node *, std::size_t>> stack{{root, 0}};
  seen.insert(root);
  while (!stack.empty()) {
    auto &[node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node *child = node->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node *node = *it;
    if (node->backward_fn && node->grad_ready) node->backward_fn(*node);
  }
}

namespace ops {

namespace {

void check_finite(const Tensor &t, const std::string &op) {
  if (!t.all_finite()) {
    throw TensorError(TensorErrorKind::kNonFiniteValue, op, "output contains NaN or Inf");
  }
}

Var make(std::string op, Tensor value, std::vector<std::shared_ptr<Node>> inputs,
         std::function<void(Node &)> fn) {
  check_finite(value, op);
  auto node = std::make_shared<Node>();
  node->op = std::move(op);
  node->value = std::move(value);
  for (const auto &in : inputs) node->requires_grad = node->requires_grad || in->requires_grad;
  node->inputs = std::move(inputs);
  if (node->requires_grad) node->backward_fn = std::move(fn);
  return Var(std::move(node));
}

void require_rank(const Var &a, std::size_t rank, const char *op) {
  if (a.value().rank() != rank) {
    throw TensorError(TensorErrorKind::kShapeMismatch, op,
                      "expected rank " + std::to_string(rank) + ", got " +
                          shape_string(a.shape()));
  }
}

enum class Broadcast { kSame, kScalar, kRow };

Broadcast broadcast_kind(const Tensor &a, const Tensor &b, const char *op) {
  if (a.shape() == b.shape()) return Broadcast::kSame;
  if (b.numel() == 1 && b.rank() <= 1) return Broadcast::kScalar;
  if (b.rank() == 0) return Broadcast::kScalar;
  if (a.rank() == 2 && ((b.rank() == 1 && b.dim(0) == a.cols()) ||
                        (b.rank() == 2 && b.rows() == 1 && b.cols() == a.cols()))) {
    return Broadcast::kRow;
  }
  throw TensorError(TensorErrorKind::kShapeMismatch, op,
                    shape_string(a.shape()) + " and " + shape_string(b.shape()));
}

// Index of b's element paired with a's element i.
inline std::size_t bindex(Broadcast kind, std::size_t i, std::size_t cols) {
  switch (kind) {
    case Broadcast::kSame: return i;
    case Broadcast::kScalar: return 0;
    case Broadcast::kRow: return i % cols;
  }
  return i;
}

// Sums `g` (shaped like a) down to b's shape.
Tensor reduce_to(const Tensor &g, const Tensor &b, Broadcast kind, std::size_t cols) {
  if (kind == Broadcast::kSame) return g;
  Tensor out = Tensor::zeros_like(b);
  for (std::size_t i = 0; i < g.numel(); ++i) out[bindex(kind, i, cols)] += g[i];
  return out;
}

template <typename Fwd>
Var binary(const char *name, const Var &a, const Var &b, Fwd fwd,
           std::function<void(const Tensor &, const Tensor &, const Tensor &, Tensor &, Tensor &)>
               grads) {
  const Tensor &av = a.value();
  const Tensor &bv = b.value();
  const Broadcast kind = broadcast_kind(av, bv, name);
  const std::size_t cols = av.rank() == 2 ? av.cols() : 1;
  Tensor out(av.shape());
  for (std::size_t i = 0; i < av.numel(); ++i) out[i] = fwd(av[i], bv[bindex(kind, i, cols)]);
  auto an = a.shared();
  auto bn = b.shared();
  return make(name, std::move(out), {an, bn}, [an, bn, kind, cols, grads](Node &self) {
    Tensor ga = Tensor::zeros_like(an->value);
    Tensor gb_full = Tensor::zeros_like(an->value);
    grads(an->value, bn->value, self.grad, ga, gb_full);
    if (an->requires_grad) an->accumulate(ga);
    if (bn->requires_grad) bn->accumulate(reduce_to(gb_full, bn->value, kind, cols));
  });
}

}  // namespace

Var matmul(const Var &a, const Var &b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const Tensor &av = a.value();
  const Tensor &bv = b.value();
  if (av.cols() != bv.rows()) {
    throw TensorError(TensorErrorKind::kShapeMismatch, "matmul",
                      shape_string(av.shape()) + " x " + shape_string(bv.shape()));
  }
  const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av(i, p);
      if (aip == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) out(i, j) += aip * bv(p, j);
    }
  }
  auto an = a.shared();
  auto bn = b.shared();
  return make("matmul", std::move(out), {an, bn}, [an, bn, m, k, n](Node &self) {
    const Tensor &g = self.grad;
    if (an->requires_grad) {
      // dA = G * B^T
      Tensor ga({m, k});
      const Tensor &bv = bn->value;
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double s = 0.0;
          for (std::size_t j = 0; j < n; ++j) s += g(i, j) * bv(p, j);
          ga(i, p) = s;
        }
      an->accumulate(ga);
    }
    if (bn->requires_grad) {
      // dB = A^T * G
      Tensor gb({k, n});
      const Tensor &av = an->value;
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = av(i, p);
          if (aip == 0.0) continue;
          for (std::size_t j = 0; j < n; ++j) gb(p, j) += aip * g(i, j);
        }
      bn->accumulate(gb);
    }
  });
}

Var transpose(const Var &a) {
  require_rank(a, 2, "transpose");
  const Tensor &av = a.value();
  const std::size_t m = av.rows(), n = av.cols();
  Tensor out({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out(j, i) = av(i, j);
  auto an = a.shared();
  return make("transpose", std::move(out), {an}, [an, m, n](Node &self) {
    Tensor ga({m, n});
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) ga(i, j) = self.grad(j, i);
    an->accumulate(ga);
  });
}

Var add(const Var &a, const Var &b) {
  if (a.value().numel() < b.value().numel()) return add(b, a);
  return binary(
      "add", a, b, [](double x, double y) { return x + y; },
      [](const Tensor &, const Tensor &, const Tensor &g, Tensor &ga, Tensor &gb) {
        ga = g;
        gb = g;
      });
}

Var sub(const Var &a, const Var &b) {
  return binary(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](const Tensor &, const Tensor &, const Tensor &g, Tensor &ga, Tensor &gb) {
        ga = g;
        for (std::size_t i = 0; i < g.numel(); ++i) gb[i] = -g[i];
      });
}

Var mul(const Var &a, const Var &b) {
  if (a.value().numel() < b.value().numel()) return mul(b, a);
  const Broadcast kind = broadcast_kind(a.value(), b.value(), "mul");
  const std::size_t cols = a.value().rank() == 2 ? a.value().cols() : 1;
  return binary(
      "mul", a, b, [](double x, double y) { return x * y; },
      [kind, cols](const Tensor &av, const Tensor &bv, const Tensor &g, Tensor &ga, Tensor &gb) {
        for (std::size_t i = 0; i < g.numel(); ++i) {
          const double bi = bv[bindex(kind, i, cols)];
          ga[i] = g[i] * bi;
          gb[i] = g[i] * av[i];
        }
      });
}

Var scale(const Var &a, double factor) {
  Tensor out = a.value();
  for (auto &v : out.data()) v *= factor;
  auto an = a.shared();
  return make("scale", std::move(out), {an}, [an, factor](Node &self) {
    Tensor ga = self.grad;
    for (auto &v : ga.data()) v *= factor;
    an->accumulate(ga);
  });
}

Var add_scalar(const Var &a, double c) {
  Tensor out = a.value();
  for (auto &v : out.data()) v += c;
  auto an = a.shared();
  return make("add_scalar", std::move(out), {an}, [an](Node &self) { an->accumulate(self.grad); });
}

Var relu(const Var &a) {
  Tensor out = a.value();
  for (auto &v : out.data()) v = v > 0.0 ? v : 0.0;
  auto an = a.shared();
  return make("relu", std::move(out), {an}, [an](Node &self) {
    Tensor ga = self.grad;
    for (std::size_t i = 0; i < ga.numel(); ++i)
      if (!(an->value[i] > 0.0)) ga[i] = 0.0;
    an->accumulate(ga);
  });
}

Var tanh(const Var &a) {
  Tensor out = a.value();
  for (auto &v : out.data()) v = std::tanh(v);
  auto an = a.shared();
  Tensor y = out;
  return make("tanh", std::move(out), {an}, [an, y](Node &self) {
    Tensor ga = self.grad;
    for (std::size_t i = 0; i < ga.numel(); ++i) ga[i] *= 1.0 - y[i] * y[i];
    an->accumulate(ga);
  });
}

Var log(const Var &a) {
  Tensor out = a.value();
  for (auto &v : out.data()) v = std::log(v);
  auto an = a.shared();
  return make("log", std::move(out), {an}, [an](Node &self) {
    Tensor ga = self.grad;
    for (std::size_t i = 0; i < ga.numel(); ++i) ga[i] /= an->value[i];
    an->accumulate(ga);
  });
}

Var exp(const Var &a) {
  Tensor out = a.value();
  for (auto &v : out.data()) v = std::exp(v);
  auto an = a.shared();
  Tensor y = out;
  return make("exp", std::move(out), {an}, [an, y](Node &self) {
    Tensor ga = self.grad;
    for (std::size_t i = 0; i < ga.numel(); ++i) ga[i] *= y[i];
    an->accumulate(ga);
  });
}

Var square(const Var &a) {
  Tensor out = a.value();
  for (auto &v : out.data()) v *= v;
  auto an = a.shared();
  return make("square", std::move(out), {an}, [an](Node &self) {
    Tensor ga = self.grad;
    for (std::size_t i = 0; i < ga.numel(); ++i) ga[i] *= 2.0 * an->value[i];
    an->accumulate(ga);
  });
}

Var row_softmax(const Var &a) {
  require_rank(a, 2, "row_softmax");
  const Tensor &av = a.value();
  const std::size_t m = av.rows(), n = av.cols();
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    auto in = av.row(i);
    const double mx = *std::max_element(in.begin(), in.end());
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += (out(i, j) = std::exp(in[j] - mx));
    for (std::size_t j = 0; j < n; ++j) out(i, j) /= z;
  }
  auto an = a.shared();
  Tensor y = out;
  return make("row_softmax", std::move(out), {an}, [an, y, m, n](Node &self) {
    Tensor ga({m, n});
    for (std::size_t i = 0; i < m; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += self.grad(i, j) * y(i, j);
      for (std::size_t j = 0; j < n; ++j) ga(i, j) = y(i, j) * (self.grad(i, j) - dot);
    }
    an->accumulate(ga);
  });
}

Var row_log_softmax(const Var &a) {
  require_rank(a, 2, "row_log_softmax");
  const Tensor &av = a.value();
  const std::size_t m = av.rows(), n = av.cols();
  Tensor out({m, n});
  Tensor prob({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    auto in = av.row(i);
    const double mx = *std::max_element(in.begin(), in.end());
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += std::exp(in[j] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t j = 0; j < n; ++j) {
      out(i, j) = in[j] - lse;
      prob(i, j) = std::exp(out(i, j));
    }
  }
  auto an = a.shared();
  return make("row_log_softmax", std::move(out), {an}, [an, prob, m, n](Node &self) {
    Tensor ga({m, n});
    for (std::size_t i = 0; i < m; ++i) {
      double gsum = 0.0;
      for (std::size_t j = 0; j < n; ++j) gsum += self.grad(i, j);
      for (std::size_t j = 0; j < n; ++j) ga(i, j) = self.grad(i, j) - prob(i, j) * gsum;
    }
    an->accumulate(ga);
  });
}

Var sum(const Var &a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  auto an = a.shared();
  return make("sum", Tensor::scalar(s), {an}, [an](Node &self) {
    an->accumulate(Tensor(an->value.shape(), self.grad[0]));
  });
}

Var mean(const Var &a) {
  const double n = static_cast<double>(a.value().numel());
  return scale(sum(a), 1.0 / n);
}

Var sum(const Var &a, std::size_t axis) {
  require_rank(a, 2, "sum(axis)");
  if (axis > 1) throw TensorError(TensorErrorKind::kShapeMismatch, "sum(axis)", "axis must be 0 or 1");
  const Tensor &av = a.value();
  const std::size_t m = av.rows(), n = av.cols();
  Tensor out({axis == 0 ? n : m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[axis == 0 ? j : i] += av(i, j);
  auto an = a.shared();
  return make("sum(axis)", std::move(out), {an}, [an, axis, m, n](Node &self) {
    Tensor ga({m, n});
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) ga(i, j) = self.grad[axis == 0 ? j : i];
    an->accumulate(ga);
  });
}

Var mean(const Var &a, std::size_t axis) {
  require_rank(a, 2, "mean(axis)");
  const double n = static_cast<double>(a.value().dim(axis));
  return scale(sum(a, axis), 1.0 / n);
}

Var l2_normalize_rows(const Var &a, std::vector<bool> *guarded) {
  require_rank(a, 2, "l2_normalize_rows");
  const Tensor &av = a.value();
  const std::size_t m = av.rows(), n = av.cols();
  Tensor out = av;
  std::vector<double> norms(m);
  std::vector<bool> flags(m, false);
  for (std::size_t i = 0; i < m; ++i) {
    double s = 0.0;
    for (double v : av.row(i)) s += v * v;
    norms[i] = std::sqrt(s);
    if (norms[i] < 1e-12) {
      flags[i] = true;
      continue;
    }
    for (double &v : out.row(i)) v /= norms[i];
  }
  if (guarded) *guarded = flags;
  auto an = a.shared();
  Tensor y = out;
  return make("l2_normalize_rows", std::move(out), {an}, [an, y, norms, flags, m, n](Node &self) {
    Tensor ga({m, n});
    for (std::size_t i = 0; i < m; ++i) {
      if (flags[i]) {
        for (std::size_t j = 0; j < n; ++j) ga(i, j) = self.grad(i, j);
        continue;
      }
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += y(i, j) * self.grad(i, j);
      for (std::size_t j = 0; j < n; ++j) ga(i, j) = (self.grad(i, j) - y(i, j) * dot) / norms[i];
    }
    an->accumulate(ga);
  });
}

Var pairwise_sq_dists(const Var &x, const Var &y) {
  require_rank(x, 2, "pairwise_sq_dists");
  require_rank(y, 2, "pairwise_sq_dists");
  const Tensor &xv = x.value();
  const Tensor &yv = y.value();
  if (xv.cols() != yv.cols()) {
    throw TensorError(TensorErrorKind::kShapeMismatch, "pairwise_sq_dists",
                      shape_string(xv.shape()) + " vs " + shape_string(yv.shape()));
  }
  const std::size_t m = xv.rows(), n = yv.rows(), d = xv.cols();
  std::vector<double> xx(m, 0.0), yy(n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (double v : xv.row(i)) xx[i] += v * v;
  for (std::size_t j = 0; j < n; ++j)
    for (double v : yv.row(j)) yy[j] += v * v;
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double dot = 0.0;
      for (std::size_t k = 0; k < d; ++k) dot += xv(i, k) * yv(j, k);
      out(i, j) = std::max(0.0, xx[i] + yy[j] - 2.0 * dot);
    }
  }
  auto xn = x.shared();
  auto yn = y.shared();
  Tensor dist = out;
  return make("pairwise_sq_dists", std::move(out), {xn, yn}, [xn, yn, dist, m, n, d](Node &self) {
    const Tensor &xv = xn->value;
    const Tensor &yv = yn->value;
    Tensor gx({m, d});
    Tensor gy({n, d});
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        // Clamped entries have zero derivative.
        if (dist(i, j) <= 0.0) continue;
        const double g = 2.0 * self.grad(i, j);
        if (g == 0.0) continue;
        for (std::size_t k = 0; k < d; ++k) {
          const double diff = xv(i, k) - yv(j, k);
          gx(i, k) += g * diff;
          gy(j, k) -= g * diff;
        }
      }
    }
    if (xn->requires_grad) xn->accumulate(gx);
    if (yn->requires_grad) yn->accumulate(gy);
  });
}

Var gather_rows(const Var &a, std::span<const std::size_t> rows) {
  require_rank(a, 2, "gather_rows");
  const Tensor &av = a.value();
  const std::size_t n = av.cols();
  Tensor out({rows.size(), n});
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (rows[k] >= av.rows()) {
      throw TensorError(TensorErrorKind::kIndexOutOfRange, "gather_rows",
                        "row " + std::to_string(rows[k]) + " of " + std::to_string(av.rows()));
    }
    std::copy_n(av.row(rows[k]).begin(), n, out.row(k).begin());
  }
  auto an = a.shared();
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return make("gather_rows", std::move(out), {an}, [an, idx, n](Node &self) {
    Tensor &ga = an->grad_buffer();
    for (std::size_t k = 0; k < idx.size(); ++k)
      for (std::size_t j = 0; j < n; ++j) ga(idx[k], j) += self.grad(k, j);
  });
}

Var gather_elements(const Var &a, std::span<const std::size_t> rows,
                    std::span<const std::size_t> cols) {
  require_rank(a, 2, "gather_elements");
  if (rows.size() != cols.size()) {
    throw TensorError(TensorErrorKind::kShapeMismatch, "gather_elements",
                      "row and column index lists differ in length");
  }
  const Tensor &av = a.value();
  Tensor out({rows.size()});
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (rows[k] >= av.rows() || cols[k] >= av.cols()) {
      throw TensorError(TensorErrorKind::kIndexOutOfRange, "gather_elements",
                        "(" + std::to_string(rows[k]) + "," + std::to_string(cols[k]) + ")");
    }
    out[k] = av(rows[k], cols[k]);
  }
  auto an = a.shared();
  std::vector<std::size_t> r(rows.begin(), rows.end()), c(cols.begin(), cols.end());
  return make("gather_elements", std::move(out), {an}, [an, r, c](Node &self) {
    Tensor &ga = an->grad_buffer();
    for (std::size_t k = 0; k < r.size(); ++k) ga(r[k], c[k]) += self.grad[k];
  });
}

}  // namespace ops

}  // namespace molalign
