// Copyright 2026 The molalign Authors.
// SPDX-License-Identifier: Apache-2.0

#include "molalign/model.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include "molalign/rng.h"

namespace molalign {

namespace {

const char *kind_name(ModelErrorKind kind) {
  switch (kind) {
    case ModelErrorKind::kAllPadding: return "AllPadding";
    case ModelErrorKind::kIdOutOfRange: return "IdOutOfRange";
    case ModelErrorKind::kEmptySequence: return "EmptySequence";
    case ModelErrorKind::kNoSuchParameter: return "NoSuchParameter";
    case ModelErrorKind::kDuplicateParameter: return "DuplicateParameter";
  }
  return "ModelError";
}

// Distinct init stream per parameter slot.
enum InitStream : std::uint64_t {
  kMolEmbed = 1,
  kMolFc1,
  kMolFc2,
  kSeqFc1,
  kSeqFc2,
  kHead,
};

}  // namespace

ModelError::ModelError(ModelErrorKind kind, const std::string &detail)
    : std::runtime_error(std::string(kind_name(kind)) + ": " + detail), kind_(kind) {}

Var ParameterSet::add(std::string name, Tensor init, bool trainable) {
  if (contains(name)) throw ModelError(ModelErrorKind::kDuplicateParameter, name);
  Var v = Var::leaf(std::move(init), true);
  params_.push_back(Parameter{std::move(name), v, trainable});
  return v;
}

bool ParameterSet::contains(const std::string &name) const {
  return std::any_of(params_.begin(), params_.end(),
                     [&](const Parameter &p) { return p.name == name; });
}

Parameter &ParameterSet::get(const std::string &name) {
  for (auto &p : params_)
    if (p.name == name) return p;
  throw ModelError(ModelErrorKind::kNoSuchParameter, name);
}

const Parameter &ParameterSet::get(const std::string &name) const {
  for (const auto &p : params_)
    if (p.name == name) return p;
  throw ModelError(ModelErrorKind::kNoSuchParameter, name);
}

std::size_t ParameterSet::set_trainable(const std::string &prefix, bool trainable) {
  std::size_t matched = 0;
  for (auto &p : params_) {
    if (p.name.rfind(prefix, 0) == 0) {
      p.trainable = trainable;
      ++matched;
    }
  }
  if (matched == 0) throw ModelError(ModelErrorKind::kNoSuchParameter, "no parameter matches '" + prefix + "'");
  return matched;
}

void ParameterSet::zero_grad() {
  for (auto &p : params_) p.var.zero_grad();
}

Tensor init_uniform(Shape shape, std::size_t fan_in, std::uint64_t seed) {
  Tensor t(std::move(shape));
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(fan_in, 1)));
  Rng rng(seed);
  for (auto &v : t.data()) v = rng.uniform(-bound, bound);
  return t;
}

MoleculeEncoder::MoleculeEncoder(ParameterSet &params, const ModelConfig &c)
    : vocab_size_(c.vocab_size) {
  embed_ = params.add("mol.embed", init_uniform({c.vocab_size, c.token_dim}, 1, derive_seed(c.seed, kMolEmbed)));
  w1_ = params.add("mol.fc1.weight", init_uniform({c.token_dim, c.hidden_dim}, c.token_dim, derive_seed(c.seed, kMolFc1)));
  b1_ = params.add("mol.fc1.bias", init_uniform({c.hidden_dim}, c.token_dim, derive_seed(c.seed, kMolFc1, 1)));
  w2_ = params.add("mol.fc2.weight", init_uniform({c.hidden_dim, c.embed_dim}, c.hidden_dim, derive_seed(c.seed, kMolFc2)));
  b2_ = params.add("mol.fc2.bias", init_uniform({c.embed_dim}, c.hidden_dim, derive_seed(c.seed, kMolFc2, 1)));
}

Var MoleculeEncoder::forward(std::span<const std::vector<int>> batch) const {
  // Gather every non-PAD token row, then average per sequence with a
  // constant pooling matrix.
  std::vector<std::size_t> rows;
  std::vector<std::size_t> owner;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    std::size_t count = 0;
    for (int id : batch[b]) {
      if (id < 0 || static_cast<std::size_t>(id) >= vocab_size_) {
        throw ModelError(ModelErrorKind::kIdOutOfRange,
                         "token id " + std::to_string(id) + " outside vocabulary of " +
                             std::to_string(vocab_size_));
      }
      if (id == 0) continue;
      rows.push_back(static_cast<std::size_t>(id));
      owner.push_back(b);
      ++count;
    }
    if (count == 0) {
      throw ModelError(ModelErrorKind::kAllPadding, "sequence " + std::to_string(b) + " has no tokens");
    }
  }
  Tensor pool({batch.size(), rows.size()});
  std::vector<double> counts(batch.size(), 0.0);
  for (std::size_t b : owner) counts[b] += 1.0;
  for (std::size_t k = 0; k < owner.size(); ++k) pool(owner[k], k) = 1.0 / counts[owner[k]];

  Var tokens = ops::gather_rows(embed_, rows);
  Var pooled = ops::matmul(Var::constant(std::move(pool)), tokens);
  Var hidden = ops::tanh(ops::add(ops::matmul(pooled, w1_), b1_));
  return ops::add(ops::matmul(hidden, w2_), b2_);
}

SequenceEncoder::SequenceEncoder(ParameterSet &params, const ModelConfig &c) : frame_dim_(c.frame_dim) {
  const std::size_t in = 2 * c.frame_dim;
  shift_ = params.add("seq.input.shift", Tensor({in}, 0.0), false);
  scale_ = params.add("seq.input.scale", Tensor({in}, 1.0), false);
  w1_ = params.add("seq.fc1.weight", init_uniform({in, c.hidden_dim}, in, derive_seed(c.seed, kSeqFc1)));
  b1_ = params.add("seq.fc1.bias", init_uniform({c.hidden_dim}, in, derive_seed(c.seed, kSeqFc1, 1)));
  w2_ = params.add("seq.fc2.weight", init_uniform({c.hidden_dim, c.embed_dim}, c.hidden_dim, derive_seed(c.seed, kSeqFc2)));
  b2_ = params.add("seq.fc2.bias", init_uniform({c.embed_dim}, c.hidden_dim, derive_seed(c.seed, kSeqFc2, 1)));
}

Tensor SequenceEncoder::pool(std::span<const Tensor> frames) {
  if (frames.empty()) return Tensor({0, 0});
  const std::size_t f = frames[0].rank() == 2 ? frames[0].cols() : 0;
  Tensor out({frames.size(), 2 * f});
  for (std::size_t b = 0; b < frames.size(); ++b) {
    const Tensor &x = frames[b];
    if (x.rank() != 2 || x.rows() == 0) {
      throw ModelError(ModelErrorKind::kEmptySequence, "sample " + std::to_string(b) + " has no frames");
    }
    if (x.cols() != f) {
      throw TensorError(TensorErrorKind::kShapeMismatch, "SequenceEncoder::pool",
                        "frame width " + std::to_string(x.cols()) + " vs " + std::to_string(f));
    }
    auto row = out.row(b);
    for (std::size_t j = 0; j < f; ++j) {
      double s = 0.0;
      double m = -std::numeric_limits<double>::infinity();
      for (std::size_t t = 0; t < x.rows(); ++t) {
        s += x(t, j);
        m = std::max(m, x(t, j));
      }
      row[j] = s / static_cast<double>(x.rows());
      row[f + j] = m;
    }
  }
  return out;
}

Var SequenceEncoder::forward(std::span<const Tensor> frames) const {
  return forward_pooled(pool(frames));
}

Var SequenceEncoder::forward_pooled(const Tensor &pooled) const {
  if (pooled.rank() != 2 || pooled.cols() != 2 * frame_dim_) {
    throw TensorError(TensorErrorKind::kShapeMismatch, "SequenceEncoder",
                      "pooled input " + shape_string(pooled.shape()) + " for frame dim " +
                          std::to_string(frame_dim_));
  }
  Var x = ops::mul(ops::sub(Var::constant(pooled), shift_), scale_);
  Var hidden = ops::relu(ops::add(ops::matmul(x, w1_), b1_));
  return ops::add(ops::matmul(hidden, w2_), b2_);
}

ClassifierHead::ClassifierHead(ParameterSet &params, const ModelConfig &c) : num_classes_(c.num_classes) {
  w_ = params.add("head.weight", init_uniform({c.embed_dim, c.num_classes}, c.embed_dim, derive_seed(c.seed, kHead)));
  b_ = params.add("head.bias", init_uniform({c.num_classes}, c.embed_dim, derive_seed(c.seed, kHead, 1)));
}

Var ClassifierHead::forward(const Var &embeddings) const {
  return ops::add(ops::matmul(embeddings, w_), b_);
}

void fit_input_normalization(Model &model, const Tensor &pooled) {
  ParameterSet &ps = model.params();
  Var shift = ps.get("seq.input.shift").var;
  Var scale = ps.get("seq.input.scale").var;
  if (pooled.rank() != 2 || pooled.cols() != shift.value().numel() || pooled.rows() == 0) {
    throw TensorError(TensorErrorKind::kShapeMismatch, "fit_input_normalization",
                      "pooled " + shape_string(pooled.shape()) + " for input width " +
                          std::to_string(shift.value().numel()));
  }
  const std::size_t n = pooled.rows(), w = pooled.cols();
  Tensor mean({w}), inv_std({w}, 1.0);
  for (std::size_t j = 0; j < w; ++j) {
    double m = 0.0;
    for (std::size_t i = 0; i < n; ++i) m += pooled(i, j);
    m /= static_cast<double>(n);
    double v = 0.0;
    for (std::size_t i = 0; i < n; ++i) v += (pooled(i, j) - m) * (pooled(i, j) - m);
    const double sd = std::sqrt(v / static_cast<double>(n));
    mean[j] = m;
    if (sd > 1e-12) inv_std[j] = 1.0 / sd;
  }
  shift.set_value(std::move(mean));
  scale.set_value(std::move(inv_std));
}

Tensor encode_molecule(std::span<const int> token_ids, const MoleculeEncoder &enc) {
  std::vector<std::vector<int>> batch{std::vector<int>(token_ids.begin(), token_ids.end())};
  const Tensor out = enc.forward(batch).value();
  return Tensor({out.cols()}, std::vector<double>(out.data().begin(), out.data().end()));
}

Tensor encode_sequence(const Tensor &frames, const SequenceEncoder &enc) {
  const Tensor out = enc.forward(std::span<const Tensor>(&frames, 1)).value();
  return Tensor({out.cols()}, std::vector<double>(out.data().begin(), out.data().end()));
}

Tensor classify(const Tensor &embedding, const ClassifierHead &head) {
  if (embedding.rank() != 1) {
    throw TensorError(TensorErrorKind::kShapeMismatch, "classify",
                      "expected a [d] embedding, got " + shape_string(embedding.shape()));
  }
  const std::size_t d = embedding.dim(0);
  Tensor row({1, d}, std::vector<double>(embedding.data().begin(), embedding.data().end()));
  const Tensor out = head.forward(Var::constant(row)).value();
  return Tensor({out.cols()}, std::vector<double>(out.data().begin(), out.data().end()));
}

Model::Model(const ModelConfig &config)
    : config_(config),
      molecule_(params_, config),
      sequence_(params_, config),
      head_(params_, config) {}

std::size_t Model::copy_from(const Model &other, const std::string &prefix) {
  std::size_t copied = 0;
  for (auto &p : params_.all()) {
    if (p.name.rfind(prefix, 0) != 0 || !other.params().contains(p.name)) continue;
    const Tensor &src = other.params().get(p.name).var.value();
    if (!src.same_shape(p.var.value())) continue;
    p.var.set_value(src);
    ++copied;
  }
  return copied;
}

}  // namespace molalign
