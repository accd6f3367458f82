// Copyright 2026 The molalign Authors.
// SPDX-License-Identifier: Apache-2.0

#ifndef MOLALIGN_GRADCHECK_H_
#define MOLALIGN_GRADCHECK_H_

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "molalign/autograd.h"

namespace molalign {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_param = 0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t coordinates = 0;
};

// Builds a scalar loss from leaf variables holding the parameters.
using ScalarFn = std::function<Var(std::span<const Var>)>;

// Compares reverse-mode gradients of `f` at `params` against central
// differences (f(p + eps e) - f(p - eps e)) / (2 eps), coordinate by
// coordinate. Relative error uses max(|analytic|, |numeric|, 1e-8) as the
// denominator. eps must lie in (0, 1e-2].
GradCheckResult finite_difference_check(const ScalarFn &f, std::span<const Tensor> params,
                                        double eps = 1e-5);

// Same comparison for leaves owned elsewhere (for example by a model): the
// leaves are perturbed in place through Var::set_value and restored, and
// `f` rebuilds the graph on every call.
GradCheckResult finite_difference_check_leaves(const std::function<Var()> &f,
                                               std::span<const Var> leaves, double eps = 1e-5);

}  // namespace molalign

#endif  // MOLALIGN_GRADCHECK_H_
