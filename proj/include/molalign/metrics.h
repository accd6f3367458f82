// Copyright 2026 The molalign Authors.
// SPDX-License-Identifier: Apache-2.0

// Query/gallery retrieval metrics (CMC, Rank-k, mAP) and top-1 accuracy.

#ifndef MOLALIGN_METRICS_H_
#define MOLALIGN_METRICS_H_

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "molalign/tensor.h"

namespace molalign::metrics {

enum class MetricErrorKind { kShapeMismatch, kQueryLabelAbsent, kLabelOutOfRange, kEmptyInput };

class MetricError : public std::runtime_error {
 public:
  MetricError(MetricErrorKind kind, const std::string &detail);
  MetricErrorKind kind() const { return kind_; }

 private:
  MetricErrorKind kind_;
};

enum class Similarity { kCosine, kEuclidean };

// Gallery indices by descending similarity to `query`; ties go to the lower
// index. Euclidean mode ranks by ascending squared distance.
std::vector<std::size_t> rank_gallery(std::span<const double> query, const Tensor &gallery,
                                      Similarity similarity = Similarity::kCosine);

struct RetrievalResult {
  std::vector<std::vector<std::size_t>> ranked;
  std::vector<double> ap;
  std::vector<double> cmc;  // cmc[k-1] = fraction of queries with a hit in the top k
  double rank1 = 0.0;
  double rank5 = 0.0;
  double rank10 = 0.0;
  double map = 0.0;
};

// max_rank == 0 means the full gallery length. Rank-k past the gallery
// length reads the last CMC entry.
RetrievalResult evaluate_retrieval(const Tensor &queries, std::span<const int> query_labels,
                                   const Tensor &gallery, std::span<const int> gallery_labels,
                                   std::size_t max_rank = 0,
                                   Similarity similarity = Similarity::kCosine);

// Average precision of one ranked relevance list.
double average_precision(const std::vector<bool> &relevant);

// Fraction of rows whose argmax (lowest index on ties) equals the label.
double accuracy(const Tensor &logits, std::span<const int> labels);

}  // namespace molalign::metrics

#endif  // MOLALIGN_METRICS_H_
