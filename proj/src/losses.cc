// Copyright 2026 The molalign Authors.
// SPDX-License-Identifier: Apache-2.0

#include "molalign/losses.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace molalign::loss {

namespace {

const char *kind_name(LossErrorKind kind) {
  switch (kind) {
    case LossErrorKind::kDegenerateBatch: return "DegenerateBatch";
    case LossErrorKind::kLabelOutOfRange: return "LabelOutOfRange";
    case LossErrorKind::kNonFiniteComponent: return "NonFiniteComponent";
    case LossErrorKind::kShapeMismatch: return "ShapeMismatch";
  }
  return "LossError";
}

void require_batch(const Var &x, std::size_t n, const char *what) {
  if (x.value().rank() != 2 || x.value().rows() != n) {
    throw LossError(LossErrorKind::kShapeMismatch,
                    std::string(what) + ": features " + shape_string(x.shape()) + " for " +
                        std::to_string(n) + " labels");
  }
}

void check_label(int label, std::size_t limit, const char *what) {
  if (label < 0 || static_cast<std::size_t>(label) >= limit) {
    throw LossError(LossErrorKind::kLabelOutOfRange,
                    std::string(what) + ": label " + std::to_string(label) + " not in [0, " +
                        std::to_string(limit) + ")");
  }
}

// Target rows normalized to sum to one.
Tensor normalize_rows(const Tensor &t) {
  Tensor out = t;
  for (std::size_t i = 0; i < t.rows(); ++i) {
    double s = 0.0;
    for (double v : t.row(i)) s += v;
    if (!(s > 0.0)) {
      throw LossError(LossErrorKind::kShapeMismatch, "soft_target_ce: target row " +
                                                         std::to_string(i) + " has no mass");
    }
    for (double &v : out.row(i)) v /= s;
  }
  return out;
}

Tensor transposed(const Tensor &t) {
  Tensor out({t.cols(), t.rows()});
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t j = 0; j < t.cols(); ++j) out(j, i) = t(i, j);
  return out;
}

// -(1/m) sum_ij target_ij log softmax(logits)_ij, target rows normalized.
Var row_soft_ce(const Var &logits, const Tensor &target) {
  Var logp = ops::row_log_softmax(logits);
  Var weighted = ops::mul(logp, Var::constant(normalize_rows(target)));
  return ops::scale(ops::sum(weighted), -1.0 / static_cast<double>(target.rows()));
}

}  // namespace

LossError::LossError(LossErrorKind kind, const std::string &detail)
    : std::runtime_error(std::string(kind_name(kind)) + ": " + detail), kind_(kind) {}

SupervisionPair build_supervision(std::span<const int> labels) {
  const std::size_t b = labels.size();
  SupervisionPair sup{Tensor({b, b}), Tensor({b, b})};
  for (std::size_t m = 0; m < b; ++m) {
    sup.m_self(m, m) = 1.0;
    for (std::size_t n = 0; n < b; ++n) sup.m_class(m, n) = labels[m] == labels[n] ? 1.0 : 0.0;
  }
  return sup;
}

Var similarity(const Var &molecule, const Var &sequence, double temperature) {
  if (!(temperature > 0.0)) {
    throw LossError(LossErrorKind::kShapeMismatch, "similarity: temperature must be positive");
  }
  if (molecule.value().rank() != 2 || sequence.value().rank() != 2 ||
      molecule.value().cols() != sequence.value().cols()) {
    throw LossError(LossErrorKind::kShapeMismatch, "similarity: " + shape_string(molecule.shape()) +
                                                       " vs " + shape_string(sequence.shape()));
  }
  Var s = ops::l2_normalize_rows(molecule);
  Var v = ops::l2_normalize_rows(sequence);
  return ops::scale(ops::matmul(s, ops::transpose(v)), 1.0 / temperature);
}

Var similarity(const Var &molecule, const Var &sequence, const Var &log_scale) {
  if (molecule.value().rank() != 2 || sequence.value().rank() != 2 ||
      molecule.value().cols() != sequence.value().cols()) {
    throw LossError(LossErrorKind::kShapeMismatch, "similarity: " + shape_string(molecule.shape()) +
                                                       " vs " + shape_string(sequence.shape()));
  }
  Var s = ops::l2_normalize_rows(molecule);
  Var v = ops::l2_normalize_rows(sequence);
  return ops::mul(ops::matmul(s, ops::transpose(v)), ops::exp(log_scale));
}

Var soft_target_ce(const Var &logits, const Tensor &target, CeDirection direction) {
  if (logits.value().rank() != 2 || !logits.value().same_shape(target)) {
    throw LossError(LossErrorKind::kShapeMismatch, "soft_target_ce: logits " +
                                                       shape_string(logits.shape()) + " vs target " +
                                                       shape_string(target.shape()));
  }
  switch (direction) {
    case CeDirection::kRows:
      return row_soft_ce(logits, target);
    case CeDirection::kColumns:
      return row_soft_ce(ops::transpose(logits), transposed(target));
    case CeDirection::kBoth:
      break;
  }
  Var rows = row_soft_ce(logits, target);
  Var cols = row_soft_ce(ops::transpose(logits), transposed(target));
  return ops::scale(ops::add(rows, cols), 0.5);
}

Var msc_loss(const Var &sv, const SupervisionPair &sup, CeDirection direction) {
  return ops::add(soft_target_ce(sv, sup.m_self, direction),
                  soft_target_ce(sv, sup.m_class, direction));
}

Var clip_loss(const Var &sv) {
  const std::size_t b = sv.value().rows();
  std::vector<std::size_t> diag(b);
  std::iota(diag.begin(), diag.end(), std::size_t{0});
  Var rows = ops::mean(ops::gather_elements(ops::row_log_softmax(sv), diag, diag));
  Var cols = ops::mean(ops::gather_elements(ops::row_log_softmax(ops::transpose(sv)), diag, diag));
  return ops::scale(ops::add(rows, cols), -0.5);
}

Var hard_triplet_loss(const Var &features, std::span<const int> labels, double margin,
                      TripletMining *mining) {
  const std::size_t b = labels.size();
  require_batch(features, b, "hard_triplet_loss");
  Var dists = ops::pairwise_sq_dists(features, features);
  const Tensor &d = dists.value();

  std::vector<std::size_t> anchors(b), pos(b), neg(b);
  double min_gap = std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < b; ++a) {
    anchors[a] = a;
    double best_p = -1.0, second_p = -1.0, best_n = -1.0, second_n = -1.0;
    bool have_p = false, have_n = false;
    for (std::size_t j = 0; j < b; ++j) {
      if (j == a) continue;
      const double dj = d(a, j);
      if (labels[j] == labels[a]) {
        if (!have_p || dj > best_p) {
          second_p = best_p;
          best_p = dj;
          pos[a] = j;
          have_p = true;
        } else if (dj > second_p) {
          second_p = dj;
        }
      } else {
        if (!have_n || dj < best_n) {
          second_n = best_n;
          best_n = dj;
          neg[a] = j;
          have_n = true;
        } else if (second_n < 0.0 || dj < second_n) {
          second_n = dj;
        }
      }
    }
    if (!have_p || !have_n) {
      throw LossError(LossErrorKind::kDegenerateBatch,
                      "label " + std::to_string(labels[a]) + " of anchor " + std::to_string(a) +
                          (have_p ? " has no negative" : " has no positive"));
    }
    if (second_p >= 0.0) min_gap = std::min(min_gap, best_p - second_p);
    if (second_n >= 0.0) min_gap = std::min(min_gap, second_n - best_n);
    min_gap = std::min(min_gap, std::abs(best_p - best_n + margin));
  }
  if (mining) {
    mining->positive = pos;
    mining->negative = neg;
    mining->min_gap = min_gap;
  }
  Var dp = ops::gather_elements(dists, anchors, pos);
  Var dn = ops::gather_elements(dists, anchors, neg);
  return ops::mean(ops::relu(ops::add_scalar(ops::sub(dp, dn), margin)));
}

CenterState::CenterState(std::size_t num_classes, std::size_t dim, double alpha_)
    : centers({num_classes, dim}), alpha(alpha_) {}

Var center_loss(const Var &features, std::span<const int> labels, const CenterState &state) {
  require_batch(features, labels.size(), "center_loss");
  if (features.value().cols() != state.centers.cols()) {
    throw LossError(LossErrorKind::kShapeMismatch, "center_loss: feature dim " +
                                                       std::to_string(features.value().cols()) +
                                                       " vs center dim " +
                                                       std::to_string(state.centers.cols()));
  }
  std::vector<std::size_t> rows(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    check_label(labels[i], state.num_classes(), "center_loss");
    rows[i] = static_cast<std::size_t>(labels[i]);
  }
  Var centers = ops::gather_rows(Var::constant(state.centers), rows);
  return ops::scale(ops::sum(ops::square(ops::sub(features, centers))), 0.5);
}

void update_centers(CenterState &state, const Tensor &features, std::span<const int> labels) {
  if (features.rank() != 2 || features.rows() != labels.size() ||
      features.cols() != state.centers.cols()) {
    throw LossError(LossErrorKind::kShapeMismatch,
                    "update_centers: features " + shape_string(features.shape()));
  }
  for (int l : labels) check_label(l, state.num_classes(), "update_centers");
  const std::size_t k = state.num_classes(), d = state.centers.cols();
  Tensor delta({k, d});
  std::vector<double> count(k, 0.0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const std::size_t c = static_cast<std::size_t>(labels[i]);
    count[c] += 1.0;
    for (std::size_t j = 0; j < d; ++j) delta(c, j) += state.centers(c, j) - features(i, j);
  }
  for (std::size_t c = 0; c < k; ++c) {
    if (count[c] == 0.0) continue;
    for (std::size_t j = 0; j < d; ++j) {
      state.centers(c, j) -= state.alpha * delta(c, j) / (1.0 + count[c]);
    }
  }
}

Var classification_ce(const Var &logits, std::span<const int> labels) {
  require_batch(logits, labels.size(), "classification_ce");
  const std::size_t k = logits.value().cols();
  std::vector<std::size_t> rows(labels.size()), cols(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    check_label(labels[i], k, "classification_ce");
    rows[i] = i;
    cols[i] = static_cast<std::size_t>(labels[i]);
  }
  return ops::scale(ops::mean(ops::gather_elements(ops::row_log_softmax(logits), rows, cols)), -1.0);
}

TotalLoss total_loss(const LossComponents &c, const LossWeights &w) {
  TotalLoss out;
  std::optional<Var> acc;
  auto fold = [&](const std::optional<Var> &component, double weight, const char *name,
                  std::optional<double> &slot) {
    if (!component) return;
    const double value = component->value().item();
    if (!std::isfinite(value)) {
      throw LossError(LossErrorKind::kNonFiniteComponent, name);
    }
    slot = value;
    Var term = ops::scale(*component, weight);
    acc = acc ? ops::add(*acc, term) : term;
  };
  fold(c.msc, w.w_msc, "msc", out.report.msc);
  fold(c.triplet, w.w_triplet, "triplet", out.report.triplet);
  fold(c.center, w.w_center, "center", out.report.center);
  fold(c.cls, w.w_cls, "cls", out.report.cls);
  out.value = acc ? *acc : Var::constant(Tensor::scalar(0.0));
  out.report.total = out.value.value().item();
  return out;
}

}  // namespace molalign::loss
