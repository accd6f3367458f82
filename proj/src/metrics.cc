// Copyright 2026 The molalign Authors.
// SPDX-License-Identifier: Apache-2.0

#include "molalign/metrics.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace molalign::metrics {

namespace {

const char *kind_name(MetricErrorKind kind) {
  switch (kind) {
    case MetricErrorKind::kShapeMismatch: return "ShapeMismatch";
    case MetricErrorKind::kQueryLabelAbsent: return "QueryLabelAbsent";
    case MetricErrorKind::kLabelOutOfRange: return "LabelOutOfRange";
    case MetricErrorKind::kEmptyInput: return "EmptyInput";
  }
  return "MetricError";
}

double norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

MetricError::MetricError(MetricErrorKind kind, const std::string &detail)
    : std::runtime_error(std::string(kind_name(kind)) + ": " + detail), kind_(kind) {}

std::vector<std::size_t> rank_gallery(std::span<const double> query, const Tensor &gallery,
                                      Similarity similarity) {
  if (gallery.rank() != 2 || gallery.rows() == 0 || gallery.cols() != query.size()) {
    throw MetricError(MetricErrorKind::kShapeMismatch,
                      "query [" + std::to_string(query.size()) + "] vs gallery " +
                          shape_string(gallery.shape()));
  }
  const std::size_t g = gallery.rows();
  std::vector<double> score(g);
  const double qn = norm(query);
  for (std::size_t i = 0; i < g; ++i) {
    const auto row = gallery.row(i);
    if (similarity == Similarity::kCosine) {
      double dot = 0.0;
      for (std::size_t j = 0; j < query.size(); ++j) dot += query[j] * row[j];
      const double denom = qn * norm(row);
      score[i] = denom > 0.0 ? dot / denom : 0.0;
    } else {
      double d = 0.0;
      for (std::size_t j = 0; j < query.size(); ++j) d += (query[j] - row[j]) * (query[j] - row[j]);
      score[i] = -d;
    }
  }
  std::vector<std::size_t> order(g);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });
  return order;
}

double average_precision(const std::vector<bool> &relevant) {
  double hits = 0.0, sum = 0.0;
  for (std::size_t r = 0; r < relevant.size(); ++r) {
    if (!relevant[r]) continue;
    hits += 1.0;
    sum += hits / static_cast<double>(r + 1);
  }
  return hits > 0.0 ? sum / hits : 0.0;
}

RetrievalResult evaluate_retrieval(const Tensor &queries, std::span<const int> query_labels,
                                   const Tensor &gallery, std::span<const int> gallery_labels,
                                   std::size_t max_rank, Similarity similarity) {
  if (queries.rank() != 2 || queries.rows() != query_labels.size() || gallery.rank() != 2 ||
      gallery.rows() != gallery_labels.size()) {
    throw MetricError(MetricErrorKind::kShapeMismatch,
                      "queries " + shape_string(queries.shape()) + " / gallery " +
                          shape_string(gallery.shape()) + " against label counts");
  }
  if (queries.rows() == 0) throw MetricError(MetricErrorKind::kEmptyInput, "no queries");
  const std::set<int> present(gallery_labels.begin(), gallery_labels.end());
  for (int l : query_labels) {
    if (!present.count(l)) {
      throw MetricError(MetricErrorKind::kQueryLabelAbsent, "label " + std::to_string(l));
    }
  }
  const std::size_t g = gallery.rows();
  const std::size_t depth = max_rank == 0 ? g : std::min(max_rank, g);

  RetrievalResult out;
  std::vector<std::size_t> first_hit_count(depth, 0);
  for (std::size_t q = 0; q < queries.rows(); ++q) {
    auto order = rank_gallery(queries.row(q), gallery, similarity);
    std::vector<bool> rel(g);
    for (std::size_t r = 0; r < g; ++r) rel[r] = gallery_labels[order[r]] == query_labels[q];
    out.ap.push_back(average_precision(rel));
    const auto first = std::find(rel.begin(), rel.end(), true);
    const std::size_t pos = static_cast<std::size_t>(first - rel.begin());
    if (pos < depth) ++first_hit_count[pos];
    out.ranked.push_back(std::move(order));
  }
  const double nq = static_cast<double>(queries.rows());
  out.cmc.resize(depth);
  std::size_t cumulative = 0;
  for (std::size_t k = 0; k < depth; ++k) {
    cumulative += first_hit_count[k];
    out.cmc[k] = static_cast<double>(cumulative) / nq;
  }
  auto rank_at = [&](std::size_t k) { return out.cmc[std::min(k, depth) - 1]; };
  out.rank1 = rank_at(1);
  out.rank5 = rank_at(5);
  out.rank10 = rank_at(10);
  out.map = std::accumulate(out.ap.begin(), out.ap.end(), 0.0) / nq;
  return out;
}

double accuracy(const Tensor &logits, std::span<const int> labels) {
  if (logits.rank() != 2 || logits.rows() != labels.size()) {
    throw MetricError(MetricErrorKind::kShapeMismatch,
                      "logits " + shape_string(logits.shape()) + " for " +
                          std::to_string(labels.size()) + " labels");
  }
  if (labels.empty()) throw MetricError(MetricErrorKind::kEmptyInput, "no rows");
  const std::size_t k = logits.cols();
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= k) {
      throw MetricError(MetricErrorKind::kLabelOutOfRange,
                        "label " + std::to_string(labels[i]) + " with K=" + std::to_string(k));
    }
    const auto row = logits.row(i);
    const std::size_t arg =
        static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    if (arg == static_cast<std::size_t>(labels[i])) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

}  // namespace molalign::metrics
