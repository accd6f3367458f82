// Copyright 2026 The molalign Authors.
// SPDX-License-Identifier: Apache-2.0

// Finite-difference checks over every loss and both encoders at small,
// seeded random shapes.

#ifndef MOLALIGN_GRAD_SUITE_H_
#define MOLALIGN_GRAD_SUITE_H_

#include <cstdint>
#include <string>
#include <vector>

#include "molalign/gradcheck.h"

namespace molalign {

inline constexpr double kGradTolerance = 1e-5;

struct GradSuiteEntry {
  std::string name;
  GradCheckResult result;
  bool passed = false;
};

std::vector<GradSuiteEntry> run_gradient_suite(std::uint64_t seed = 0, double eps = 1e-5);

}  // namespace molalign

#endif  // MOLALIGN_GRAD_SUITE_H_
