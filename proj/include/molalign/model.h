// Copyright 2026 The molalign Authors.
// SPDX-License-Identifier: Apache-2.0

// Desk-scale encoders for the two modalities, the classification head, and
// the named parameter store shared by the optimizer and checkpoints.
//
// MoleculeEncoder: token ids -> masked mean of embeddings -> affine -> tanh
// -> affine. SequenceEncoder: per-frame features [T, f] -> concat(mean_T,
// max_T) -> affine -> relu -> affine. Both emit d-dimensional embeddings.

#ifndef MOLALIGN_MODEL_H_
#define MOLALIGN_MODEL_H_

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "molalign/autograd.h"
#include "molalign/tensor.h"

namespace molalign {

enum class ModelErrorKind {
  kAllPadding,
  kIdOutOfRange,
  kEmptySequence,
  kNoSuchParameter,
  kDuplicateParameter,
};

class ModelError : public std::runtime_error {
 public:
  ModelError(ModelErrorKind kind, const std::string &detail);
  ModelErrorKind kind() const { return kind_; }

 private:
  ModelErrorKind kind_;
};

struct Parameter {
  std::string name;
  Var var;
  bool trainable = true;
};

class ParameterSet {
 public:
  Var add(std::string name, Tensor init, bool trainable = true);

  bool contains(const std::string &name) const;
  Parameter &get(const std::string &name);
  const Parameter &get(const std::string &name) const;

  std::vector<Parameter> &all() { return params_; }
  const std::vector<Parameter> &all() const { return params_; }
  std::size_t size() const { return params_.size(); }

  // Sets the trainable flag on every parameter whose name starts with
  // `prefix`; returns how many matched. Throws NoSuchParameter on zero.
  std::size_t set_trainable(const std::string &prefix, bool trainable);
  void zero_grad();

 private:
  std::vector<Parameter> params_;
};

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)).
Tensor init_uniform(Shape shape, std::size_t fan_in, std::uint64_t seed);

struct ModelConfig {
  std::size_t vocab_size = 2;
  std::size_t frame_dim = 32;
  std::size_t token_dim = 32;
  std::size_t hidden_dim = 64;
  std::size_t embed_dim = 64;
  std::size_t num_classes = 2;
  std::uint64_t seed = 0;
};

class MoleculeEncoder {
 public:
  static constexpr const char *kPrefix = "mol.";

  MoleculeEncoder() = default;
  MoleculeEncoder(ParameterSet &params, const ModelConfig &config);

  // One row per sequence of token ids; PAD (0) positions are masked out.
  Var forward(std::span<const std::vector<int>> batch) const;

  std::size_t vocab_size() const { return vocab_size_; }

 private:
  std::size_t vocab_size_ = 0;
  Var embed_, w1_, b1_, w2_, b2_;
};

class SequenceEncoder {
 public:
  static constexpr const char *kPrefix = "seq.";
  // Frozen per-column standardization of the pooled input, (x - shift) * scale;
  // identity until fit_input_normalization runs.
  static constexpr const char *kInputPrefix = "seq.input.";

  SequenceEncoder() = default;
  SequenceEncoder(ParameterSet &params, const ModelConfig &config);

  // Concatenated mean and max over frames; [B, 2f]. Frames are data, not
  // parameters, so pooling sits outside the graph.
  static Tensor pool(std::span<const Tensor> frames);

  Var forward(std::span<const Tensor> frames) const;
  Var forward_pooled(const Tensor &pooled) const;

 private:
  std::size_t frame_dim_ = 0;
  Var shift_, scale_, w1_, b1_, w2_, b2_;
};

class ClassifierHead {
 public:
  static constexpr const char *kPrefix = "head.";

  ClassifierHead() = default;
  ClassifierHead(ParameterSet &params, const ModelConfig &config);

  Var forward(const Var &embeddings) const;  // [B, d] -> [B, K]
  std::size_t num_classes() const { return num_classes_; }

 private:
  std::size_t num_classes_ = 0;
  Var w_, b_;
};

// Single-sample conveniences over the batched forward passes.
Tensor encode_molecule(std::span<const int> token_ids, const MoleculeEncoder &enc);
Tensor encode_sequence(const Tensor &frames, const SequenceEncoder &enc);
Tensor classify(const Tensor &embedding, const ClassifierHead &head);

// All learnable state of one dual-branch network.
class Model {
 public:
  explicit Model(const ModelConfig &config);
  Model(const Model &) = delete;
  Model &operator=(const Model &) = delete;

  const ModelConfig &config() const { return config_; }
  ParameterSet &params() { return params_; }
  const ParameterSet &params() const { return params_; }
  const MoleculeEncoder &molecule() const { return molecule_; }
  const SequenceEncoder &sequence() const { return sequence_; }
  const ClassifierHead &head() const { return head_; }

  // Copies values (not flags) of every parameter whose name starts with
  // `prefix` and whose shape matches; returns the number copied.
  std::size_t copy_from(const Model &other, const std::string &prefix);

 private:
  ModelConfig config_;
  ParameterSet params_;
  MoleculeEncoder molecule_;
  SequenceEncoder sequence_;
  ClassifierHead head_;
};

// Sets the sequence encoder's input shift/scale to the column means and
// inverse standard deviations of `pooled` ([N, 2f]); constant columns keep
// scale 1.
void fit_input_normalization(Model &model, const Tensor &pooled);

}  // namespace molalign

#endif  // MOLALIGN_MODEL_H_
