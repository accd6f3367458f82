// Copyright 2026 The molalign Authors.
// SPDX-License-Identifier: Apache-2.0

#include "molalign/gradcheck.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace molalign {

namespace {

double evaluate(const ScalarFn &f, const std::vector<Tensor> &values) {
  std::vector<Var> leaves;
  leaves.reserve(values.size());
  for (const auto &v : values) leaves.push_back(Var::constant(v));
  return f(leaves).value().item();
}

}  // namespace

GradCheckResult finite_difference_check(const ScalarFn &f, std::span<const Tensor> params,
                                        double eps) {
  if (!(eps > 0.0 && eps <= 1e-2)) {
    throw std::invalid_argument("finite_difference_check: eps must lie in (0, 1e-2]");
  }
  std::vector<Var> leaves;
  for (const auto &p : params) leaves.push_back(Var::leaf(p, true));
  Var loss = f(leaves);
  backward(loss);

  GradCheckResult result;
  std::vector<Tensor> values(params.begin(), params.end());
  for (std::size_t p = 0; p < values.size(); ++p) {
    const Tensor analytic = leaves[p].grad();
    for (std::size_t i = 0; i < values[p].numel(); ++i) {
      const double orig = values[p][i];
      values[p][i] = orig + eps;
      const double plus = evaluate(f, values);
      values[p][i] = orig - eps;
      const double minus = evaluate(f, values);
      values[p][i] = orig;

      const double numeric = (plus - minus) / (2.0 * eps);
      const double a = analytic[i];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      const double rel = std::abs(a - numeric) / denom;
      ++result.coordinates;
      if (rel > result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst_param = p;
        result.worst_index = i;
        result.analytic = a;
        result.numeric = numeric;
      }
    }
  }
  return result;
}

GradCheckResult finite_difference_check_leaves(const std::function<Var()> &f,
                                               std::span<const Var> leaves, double eps) {
  if (!(eps > 0.0 && eps <= 1e-2)) {
    throw std::invalid_argument("finite_difference_check: eps must lie in (0, 1e-2]");
  }
  for (Var v : leaves) v.zero_grad();
  backward(f());

  GradCheckResult result;
  for (std::size_t p = 0; p < leaves.size(); ++p) {
    Var leaf = leaves[p];
    const Tensor analytic = leaf.grad();
    const Tensor base = leaf.value();
    Tensor probe = base;
    for (std::size_t i = 0; i < base.numel(); ++i) {
      probe[i] = base[i] + eps;
      leaf.set_value(probe);
      const double plus = f().value().item();
      probe[i] = base[i] - eps;
      leaf.set_value(probe);
      const double minus = f().value().item();
      probe[i] = base[i];
      leaf.set_value(base);

      const double numeric = (plus - minus) / (2.0 * eps);
      const double a = analytic[i];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      const double rel = std::abs(a - numeric) / denom;
      ++result.coordinates;
      if (rel > result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst_param = p;
        result.worst_index = i;
        result.analytic = a;
        result.numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace molalign
