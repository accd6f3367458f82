// Copyright 2026 The molalign Authors.
// SPDX-License-Identifier: Apache-2.0

// Training signals for the dual-branch model: multi-positive cross-modal
// alignment, batch-hard triplet, center, and classification losses, and
// their weighted sum.

#ifndef MOLALIGN_LOSSES_H_
#define MOLALIGN_LOSSES_H_

#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "molalign/autograd.h"
#include "molalign/tensor.h"

namespace molalign::loss {

enum class LossErrorKind {
  kDegenerateBatch,
  kLabelOutOfRange,
  kNonFiniteComponent,
  kShapeMismatch,
};

class LossError : public std::runtime_error {
 public:
  LossError(LossErrorKind kind, const std::string &detail);
  LossErrorKind kind() const { return kind_; }

 private:
  LossErrorKind kind_;
};

// Self target (identity) and class target (same-label indicator).
struct SupervisionPair {
  Tensor m_self;
  Tensor m_class;
};

SupervisionPair build_supervision(std::span<const int> labels);

// Row i of S against row j of V after L2 normalization, divided by tau.
Var similarity(const Var &molecule, const Var &sequence, double temperature);
// Same, multiplied by exp(log_scale) instead; log_scale is a scalar Var so
// the temperature can be learned.
Var similarity(const Var &molecule, const Var &sequence, const Var &log_scale);

enum class CeDirection { kBoth, kRows, kColumns };

// Cross-entropy of the softmax of `logits` against `target` with each row
// (and/or column) of the target normalized to a distribution. kBoth averages
// the row and column terms.
Var soft_target_ce(const Var &logits, const Tensor &target, CeDirection direction = CeDirection::kBoth);

// CE(sv, m_self) + CE(sv, m_class).
Var msc_loss(const Var &sv, const SupervisionPair &sup, CeDirection direction = CeDirection::kBoth);

// Symmetric one-hot cross-entropy over the diagonal, written directly from
// log-softmax of rows and columns.
Var clip_loss(const Var &sv);

struct TripletMining {
  std::vector<std::size_t> positive;  // hardest positive per anchor
  std::vector<std::size_t> negative;  // hardest negative per anchor
  // Smallest distance from a selection or hinge boundary across anchors;
  // small values mean the loss is near a non-differentiable point.
  double min_gap = 0.0;
};

// Mean over anchors of max(0, d(a, hardest positive) - d(a, hardest negative)
// + margin), with squared Euclidean distances.
Var hard_triplet_loss(const Var &features, std::span<const int> labels, double margin,
                      TripletMining *mining = nullptr);

struct CenterState {
  Tensor centers;  // [num_classes, d]
  double alpha = 0.5;

  CenterState() = default;
  CenterState(std::size_t num_classes, std::size_t dim, double alpha = 0.5);
  std::size_t num_classes() const { return centers.rows(); }
};

// (1/2) sum_i ||f_i - c_{label_i}||^2
Var center_loss(const Var &features, std::span<const int> labels, const CenterState &state);

// For each class c present: delta = sum_{i in c} (c - f_i) / (1 + n_c);
// c <- c - alpha * delta. Absent classes are untouched.
void update_centers(CenterState &state, const Tensor &features, std::span<const int> labels);

// Mean of -log softmax(logits)[label].
Var classification_ce(const Var &logits, std::span<const int> labels);

struct LossWeights {
  double w_msc = 1.0;
  double w_triplet = 1.0;
  double w_center = 0.1;
  double w_cls = 1.0;
  double margin = 0.3;
};

struct LossComponents {
  std::optional<Var> msc;
  std::optional<Var> triplet;
  std::optional<Var> center;
  std::optional<Var> cls;
};

// Unweighted component values plus the weighted total.
struct LossReport {
  std::optional<double> msc;
  std::optional<double> triplet;
  std::optional<double> center;
  std::optional<double> cls;
  double total = 0.0;
};

struct TotalLoss {
  Var value;
  LossReport report;
};

TotalLoss total_loss(const LossComponents &components, const LossWeights &weights);

}  // namespace molalign::loss

#endif  // MOLALIGN_LOSSES_H_
