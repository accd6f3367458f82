// Copyright 2026 The molalign Authors.
// SPDX-License-Identifier: Apache-2.0

#include "molalign/grad_suite.h"

#include <functional>

#include "molalign/losses.h"
#include "molalign/model.h"
#include "molalign/rng.h"

namespace molalign {

namespace {

Tensor normal(Rng &rng, Shape shape, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (auto &v : t.data()) v = scale * rng.normal();
  return t;
}

// Redraw until batch-hard mining sits at least `gap` away from any
// selection or hinge boundary, with at least one active hinge.
Tensor triplet_features(Rng &rng, std::span<const int> labels, std::size_t d, double margin) {
  constexpr double kGap = 1e-3;
  for (;;) {
    Tensor f = normal(rng, {labels.size(), d}, 0.25);
    loss::TripletMining mining;
    const double value = loss::hard_triplet_loss(Var::constant(f), labels, margin, &mining).value().item();
    if (mining.min_gap >= kGap && value > 0.0) return f;
  }
}

}  // namespace

std::vector<GradSuiteEntry> run_gradient_suite(std::uint64_t seed, double eps) {
  std::vector<GradSuiteEntry> out;
  auto record = [&](std::string name, const GradCheckResult &r) {
    out.push_back({std::move(name), r, r.max_rel_error <= kGradTolerance});
  };
  Rng rng(derive_seed(seed, 0x6772));
  const std::size_t b = 4, d = 8;
  const std::vector<int> labels{0, 1, 0, 1};
  const loss::LossWeights weights;

  {
    const auto sup = loss::build_supervision(labels);
    const Tensor sv = normal(rng, {b, b}, 3.0);
    for (auto dir : {loss::CeDirection::kBoth, loss::CeDirection::kRows, loss::CeDirection::kColumns}) {
      const char *suffix = dir == loss::CeDirection::kBoth   ? "both"
                           : dir == loss::CeDirection::kRows ? "rows"
                                                             : "columns";
      record(std::string("msc/sv/") + suffix,
             finite_difference_check(
                 [&](std::span<const Var> p) { return loss::msc_loss(p[0], sup, dir); },
                 std::vector<Tensor>{sv}, eps));
    }
  }
  {
    const auto sup = loss::build_supervision(labels);
    const std::vector<Tensor> feats{normal(rng, {b, d}), normal(rng, {b, d})};
    record("msc/features", finite_difference_check(
                               [&](std::span<const Var> p) {
                                 return loss::msc_loss(loss::similarity(p[0], p[1], 0.07), sup);
                               },
                               feats, eps));
    std::vector<Tensor> with_scale = feats;
    with_scale.push_back(Tensor::scalar(1.5));
    record("msc/learned_scale", finite_difference_check(
                                    [&](std::span<const Var> p) {
                                      return loss::msc_loss(loss::similarity(p[0], p[1], p[2]), sup);
                                    },
                                    with_scale, eps));
  }
  record("clip/sv", finite_difference_check(
                        [](std::span<const Var> p) { return loss::clip_loss(p[0]); },
                        std::vector<Tensor>{normal(rng, {b, b}, 3.0)}, eps));
  {
    const Tensor f = triplet_features(rng, labels, d, weights.margin);
    record("triplet/features", finite_difference_check(
                                   [&](std::span<const Var> p) {
                                     return loss::hard_triplet_loss(p[0], labels, weights.margin);
                                   },
                                   std::vector<Tensor>{f}, eps));
  }
  {
    loss::CenterState centers(2, d);
    centers.centers = normal(rng, {2, d});
    record("center/features", finite_difference_check(
                                  [&](std::span<const Var> p) { return loss::center_loss(p[0], labels, centers); },
                                  std::vector<Tensor>{normal(rng, {b, d})}, eps));
  }
  {
    const std::vector<int> cls_labels{0, 2, 1, 2};
    record("classification/logits",
           finite_difference_check(
               [&](std::span<const Var> p) { return loss::classification_ce(p[0], cls_labels); },
               std::vector<Tensor>{normal(rng, {b, 3}, 2.0)}, eps));
  }

  // Both encoders and the head, composed with the weighted total loss.
  ModelConfig mc;
  mc.vocab_size = 7;
  mc.frame_dim = 3;
  mc.token_dim = 4;
  mc.hidden_dim = 5;
  mc.embed_dim = 6;
  mc.num_classes = 2;
  mc.seed = derive_seed(seed, 0x6d6f);
  Model model(mc);
  const std::vector<std::vector<int>> ids{{2, 3, 4, 0, 0}, {5, 6, 0, 0, 0}, {2, 2, 6, 1, 0}, {4, 0, 0, 0, 0}};
  std::vector<Tensor> frames;
  for (std::size_t i = 0; i < b; ++i) frames.push_back(normal(rng, {5, mc.frame_dim}));
  const Tensor pooled = SequenceEncoder::pool(frames);
  loss::CenterState centers(2, mc.embed_dim);
  centers.centers = normal(rng, {2, mc.embed_dim}, 0.5);
  const auto sup = loss::build_supervision(labels);

  auto leaves_with = [&](const char *prefix) {
    std::vector<Var> v;
    for (const auto &p : model.params().all())
      if (p.name.rfind(prefix, 0) == 0) v.push_back(p.var);
    return v;
  };
  {
    const Tensor proj = normal(rng, {b, mc.embed_dim});
    record("molecule_encoder", finite_difference_check_leaves(
                                   [&] {
                                     return ops::sum(ops::mul(model.molecule().forward(ids), Var::constant(proj)));
                                   },
                                   leaves_with("mol."), eps));
    record("sequence_encoder", finite_difference_check_leaves(
                                   [&] {
                                     return ops::sum(ops::mul(model.sequence().forward_pooled(pooled), Var::constant(proj)));
                                   },
                                   leaves_with("seq."), eps));
  }
  record("full_model/total_loss",
         finite_difference_check_leaves(
             [&] {
               Var s = model.molecule().forward(ids);
               Var v = model.sequence().forward_pooled(pooled);
               loss::LossComponents c;
               c.msc = loss::msc_loss(loss::similarity(s, v, 0.5), sup);
               c.center = loss::center_loss(v, labels, centers);
               c.cls = loss::classification_ce(model.head().forward(v), labels);
               return loss::total_loss(c, weights).value;
             },
             leaves_with(""), eps));
  return out;
}

}  // namespace molalign
