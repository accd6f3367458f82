// Copyright 2026 The molalign Authors.
// SPDX-License-Identifier: Apache-2.0

#include "molalign/metrics.h"

#include <algorithm>
#include <cmath>

#include <gtest/gtest.h>

#include "test_util.h"

namespace molalign::metrics {
namespace {

using testing::random_tensor;

MetricErrorKind metric_error_of(const std::function<void()> &fn) {
  try {
    fn();
  } catch (const MetricError &e) {
    return e.kind();
  }
  ADD_FAILURE() << "no MetricError";
  return MetricErrorKind::kEmptyInput;
}

TEST(RankGalleryTest, QueryVectorRankedFirst) {
  const Tensor gallery = Tensor::matrix({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}});
  const std::vector<double> q{0, 0, 1};
  EXPECT_EQ(rank_gallery(q, gallery).front(), 2u);
  const std::vector<double> q2{0, 1, 0};
  EXPECT_EQ(rank_gallery(q2, gallery, Similarity::kEuclidean).front(), 1u);
}

TEST(RankGalleryTest, TiesGoToLowerIndex) {
  const Tensor gallery = Tensor::matrix({{0, 1}, {2, 0}, {1, 0}, {0, 3}});
  const std::vector<double> q{1, 0};
  EXPECT_EQ(rank_gallery(q, gallery), (std::vector<std::size_t>{1, 2, 0, 3}));
}

TEST(RankGalleryTest, MatchesSortOracle) {
  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor gallery = random_tensor({20, 8}, rng);
    const Tensor q = random_tensor({8}, rng);
    std::vector<std::pair<double, std::size_t>> keyed;
    for (std::size_t j = 0; j < 20; ++j) {
      keyed.emplace_back(-testing::brute_cosine(q.data(), gallery.row(j)), j);
    }
    std::sort(keyed.begin(), keyed.end());
    std::vector<std::size_t> expected;
    for (const auto &[s, j] : keyed) expected.push_back(j);
    EXPECT_EQ(rank_gallery(q.data(), gallery), expected);
  }
}

TEST(RankGalleryTest, ShapeMismatch) {
  const std::vector<double> q{1, 0, 0};
  EXPECT_EQ(metric_error_of([&] { rank_gallery(q, Tensor({2, 2})); }), MetricErrorKind::kShapeMismatch);
  EXPECT_EQ(metric_error_of([&] { rank_gallery(q, Tensor({0, 3})); }), MetricErrorKind::kShapeMismatch);
}

TEST(AveragePrecisionTest, HandExample) {
  EXPECT_NEAR(average_precision({true, false, true}), 0.5 * (1.0 + 2.0 / 3.0), 1e-15);
  EXPECT_EQ(average_precision({true, true}), 1.0);
}

TEST(RetrievalTest, PerfectRanking) {
  const Tensor queries = Tensor::matrix({{1, 0}, {0, 1}});
  const Tensor gallery = Tensor::matrix({{0, 2}, {3, 0}, {0, 1}, {1, 0.1}});
  const std::vector<int> ql{0, 1}, gl{1, 0, 1, 0};
  const auto r = evaluate_retrieval(queries, ql, gallery, gl);
  EXPECT_EQ(r.map, 1.0);
  for (double c : r.cmc) EXPECT_EQ(c, 1.0);
  EXPECT_EQ(r.cmc.size(), 4u);
  EXPECT_EQ(r.rank10, 1.0);
}

TEST(RetrievalTest, MatchesBruteForce) {
  Rng rng(2);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t q = 1 + rng.index(10), g = q + rng.index(21 - q), k = 1 + rng.index(q);
    const Tensor queries = random_tensor({q, 6}, rng), gallery = random_tensor({g, 6}, rng);
    std::vector<int> ql(q), gl(g);
    for (auto &l : gl) l = static_cast<int>(rng.index(k));
    for (std::size_t j = 0; j < k && j < g; ++j) gl[j] = static_cast<int>(j);
    for (auto &l : ql) l = gl[rng.index(g)];
    const auto r = evaluate_retrieval(queries, ql, gallery, gl);
    const auto oracle = testing::brute_retrieval(queries, ql, gallery, gl);
    EXPECT_NEAR(r.map, oracle.map, 1e-12);
    ASSERT_EQ(r.cmc.size(), oracle.cmc.size());
    for (std::size_t i = 0; i < r.cmc.size(); ++i) EXPECT_NEAR(r.cmc[i], oracle.cmc[i], 1e-12);
    EXPECT_EQ(r.rank1, r.cmc[0]);
  }
}

TEST(RetrievalTest, MonotoneAndBounded) {
  Rng rng(3);
  const Tensor queries = random_tensor({5, 4}, rng), gallery = random_tensor({30, 4}, rng);
  std::vector<int> ql{0, 1, 2, 3, 4}, gl(30);
  for (std::size_t j = 0; j < 30; ++j) gl[j] = static_cast<int>(j % 5);
  const auto r = evaluate_retrieval(queries, ql, gallery, gl);
  for (std::size_t i = 1; i < r.cmc.size(); ++i) EXPECT_LE(r.cmc[i - 1], r.cmc[i]);
  EXPECT_LE(r.rank1, r.rank5);
  EXPECT_LE(r.rank5, r.rank10);
  EXPECT_GE(r.map, 0.0);
  EXPECT_LE(r.map, 1.0);
}

TEST(RetrievalTest, MaxRankAndShortGallery) {
  const Tensor queries = Tensor::matrix({{1, 0}});
  const Tensor gallery = Tensor::matrix({{0, 1}, {1, 0}});
  const std::vector<int> ql{0}, gl{1, 0};
  const auto r = evaluate_retrieval(queries, ql, gallery, gl, 1);
  EXPECT_EQ(r.cmc.size(), 1u);
  const auto full = evaluate_retrieval(queries, ql, gallery, gl);
  EXPECT_EQ(full.rank1, 1.0);
  EXPECT_EQ(full.rank10, full.cmc.back());
}

TEST(RetrievalTest, GalleryOrderInvariance) {
  Rng rng(4);
  const Tensor queries = random_tensor({4, 5}, rng), gallery = random_tensor({12, 5}, rng);
  const std::vector<int> ql{0, 1, 2, 0};
  std::vector<int> gl(12);
  for (std::size_t j = 0; j < 12; ++j) gl[j] = static_cast<int>(j % 3);
  std::vector<std::size_t> perm(12);
  std::iota(perm.begin(), perm.end(), 0);
  rng.shuffle(perm);
  Tensor shuffled({12, 5});
  std::vector<int> sl(12);
  for (std::size_t j = 0; j < 12; ++j) {
    for (std::size_t c = 0; c < 5; ++c) shuffled(j, c) = gallery(perm[j], c);
    sl[j] = gl[perm[j]];
  }
  EXPECT_NEAR(evaluate_retrieval(queries, ql, gallery, gl).map,
              evaluate_retrieval(queries, ql, shuffled, sl).map, 1e-12);
}

TEST(RetrievalTest, QueryLabelAbsent) {
  const std::vector<int> ql{5}, gl{0, 1};
  EXPECT_EQ(metric_error_of([&] {
              evaluate_retrieval(Tensor({1, 2}, 1.0), ql, Tensor({2, 2}, 1.0), gl);
            }),
            MetricErrorKind::kQueryLabelAbsent);
}

TEST(AccuracyTest, Examples) {
  const std::vector<int> labels{0, 2, 1};
  const Tensor onehot = Tensor::matrix({{1, 0, 0}, {0, 0, 1}, {0, 1, 0}});
  EXPECT_EQ(accuracy(onehot, labels), 1.0);
  const Tensor shifted = Tensor::matrix({{0, 1, 0}, {1, 0, 0}, {0, 0, 1}});
  EXPECT_EQ(accuracy(shifted, labels), 0.0);

  Tensor logits({7, 2}, 0.0);
  std::vector<int> seven{0, 0, 0, 0, 0, 1, 1};
  logits(5, 0) = 1.0;
  logits(6, 0) = 1.0;
  EXPECT_DOUBLE_EQ(accuracy(logits, seven), 5.0 / 7.0);  // ties pick index 0
  const std::vector<int> bad{0, 0, 3};
  EXPECT_EQ(metric_error_of([&] { accuracy(onehot, bad); }), MetricErrorKind::kLabelOutOfRange);
}

}  // namespace
}  // namespace molalign::metrics
