// Copyright 2026 The molalign Authors.
// SPDX-License-Identifier: Apache-2.0

// Training protocol: configuration, momentum SGD, single-stage training,
// the pretraining strategies, the center-weight sweep, and checkpoints.

#ifndef MOLALIGN_HARNESS_H_
#define MOLALIGN_HARNESS_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "molalign/data.h"
#include "molalign/losses.h"
#include "molalign/model.h"
#include "molalign/smiles.h"

namespace molalign::harness {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Stage { kPretrainDrug, kFinetuneMoa };
enum class MClassLabels { kStage, kMoa };
enum class StrategyId { kS1SeqOnly, kS2FreshSeq, kS3PretrainedSeq };

const char *stage_name(Stage stage);
const char *strategy_name(StrategyId id);
StrategyId parse_strategy(const std::string &text);

inline constexpr const char *kLogitScaleName = "clip.logit_scale";

struct TrainConfig {
  std::size_t epochs = 500;
  std::size_t p = 16;
  std::size_t k = 4;
  // Shrink P to the classes available and grow K to keep P*K, so a stage
  // with fewer classes than P still trains on full batches.
  bool fit_batch = true;
  double learning_rate = 0.001;
  double momentum = 0.9;
  loss::LossWeights weights;
  double temperature = 0.07;
  bool learn_temperature = false;
  double center_alpha = 0.5;
  std::size_t embed_dim = 64;
  std::size_t hidden_dim = 64;
  std::size_t token_dim = 32;
  std::size_t max_len = 96;
  std::uint64_t seed = 0;
  Stage stage = Stage::kPretrainDrug;
  // Unset: frozen iff stage is kFinetuneMoa.
  std::optional<bool> freeze_molecule_encoder;
  // Off for sequence-only training (no molecule branch, no alignment loss).
  bool alignment = true;
  // Evaluate every N epochs; 0 evaluates only after the last epoch.
  std::size_t eval_every = 0;
  MClassLabels mclass_labels = MClassLabels::kStage;
  loss::CeDirection ce_direction = loss::CeDirection::kBoth;
  double split_ratio = 0.8;
  // Drug-disjoint splits hold out whole drugs; see data::split_by_drug.
  data::SplitBy split_by = data::SplitBy::kSample;
  // Epoch counts for the two pipeline stages; 0 falls back to `epochs`.
  std::size_t pretrain_epochs = 0;
  std::size_t finetune_epochs = 0;

  bool freeze_molecule() const {
    return freeze_molecule_encoder.value_or(stage == Stage::kFinetuneMoa);
  }
  data::LabelKind label_kind() const {
    return stage == Stage::kPretrainDrug ? data::LabelKind::kDrug : data::LabelKind::kMoa;
  }
  // Throws ConfigError when an invariant fails.
  void validate() const;
};

// Flat key=value text, one per line; '#' starts a comment. Unknown keys and
// malformed values throw ConfigError naming the line.
TrainConfig parse_config(const std::string &text, TrainConfig base = {});
TrainConfig load_config(const std::filesystem::path &path, TrainConfig base = {});
std::string serialize_config(const TrainConfig &config);

using Velocity = std::map<std::string, Tensor>;

// v <- momentum * v + g; p <- p - lr * v for every trainable parameter.
// `grads` is aligned with params.all(). Frozen parameters and their velocity
// are left untouched.
void sgd_step(ParameterSet &params, std::span<const Tensor> grads, Velocity &velocity, double lr,
              double momentum);
// Same, reading each parameter's accumulated gradient.
void sgd_step(ParameterSet &params, Velocity &velocity, double lr, double momentum);

struct NamedTensor {
  std::string name;
  Tensor value;
  bool trainable = true;
};

// Everything needed to rebuild a model and resume its optimizer. `step` is
// the number of optimizer steps already applied.
struct Checkpoint {
  TrainConfig config;
  ModelConfig model;
  smiles::Vocabulary vocab;
  std::vector<NamedTensor> params;
  std::vector<NamedTensor> velocity;
  loss::CenterState centers;
  std::uint64_t step = 0;
};

inline constexpr const char *kCheckpointTag = "molalign-ckpt v1";

void save_checkpoint(const std::filesystem::path &path, const Checkpoint &ckpt);
Checkpoint load_checkpoint(const std::filesystem::path &path);
std::string checkpoint_to_string(const Checkpoint &ckpt);
Checkpoint checkpoint_from_string(const std::string &text);

// Model with the checkpoint's architecture and parameter values.
std::unique_ptr<Model> restore_model(const Checkpoint &ckpt);

struct EvalRecord {
  std::size_t epoch = 0;
  std::uint64_t step = 0;
  double accuracy = 0.0;
  double rank1 = 0.0;
  double rank5 = 0.0;
  double rank10 = 0.0;
  double map = 0.0;
  std::vector<double> cmc;

  bool operator==(const EvalRecord &) const = default;
};

struct StepLog {
  std::uint64_t step = 0;
  loss::LossReport report;
};

struct StageResult {
  Checkpoint checkpoint;
  std::vector<EvalRecord> history;
  std::vector<StepLog> losses;
  // Checkpoints taken before the listed steps ran (see RunOptions).
  std::map<std::uint64_t, Checkpoint> snapshots;
  std::size_t batch_p = 0;
  std::size_t batch_k = 0;

  const EvalRecord &final_metrics() const { return history.back(); }
};

struct RunOptions {
  // Steps before which to capture a snapshot of the full training state.
  std::vector<std::uint64_t> snapshot_steps;
  // Prefix of parameters to copy from `init`; empty copies every parameter
  // whose shape matches.
  std::string init_prefix;
};

// One training stage on split.train, evaluated on the test side with
// sequence embeddings only. Labels for the classification/triplet/center
// losses and the query/gallery split follow config.stage.
StageResult run_stage(const TrainConfig &config, const data::DatasetSplit &split,
                      const Checkpoint *init = nullptr, const RunOptions &options = {});

// Recomputes the loss of step `ckpt.step` from a snapshot taken before it.
loss::LossReport recompute_step_loss(const Checkpoint &ckpt, const data::DatasetSplit &split);

// Evaluates a checkpoint on the split's test side under its stage labels.
EvalRecord evaluate_checkpoint(const Checkpoint &ckpt, const data::DatasetSplit &split);

struct StrategyReport {
  StrategyId id = StrategyId::kS1SeqOnly;
  EvalRecord drug;  // final drug-recognition metrics
  StageResult stage;
  std::optional<StageResult> seq_pretrain;  // S3's S1 run
  bool has_alignment_history() const;
};

// S1: sequence encoder with classification/triplet/center losses only.
// S2: full model from fresh initialization. S3: sequence weights from an S1
// run, then the full model. All three train on drug labels.
StrategyReport run_strategy(StrategyId id, const TrainConfig &base, const data::DatasetSplit &split);

struct PipelineResult {
  StrategyReport pretrain;
  StageResult finetune;
};

// Drug-label pretraining via `strategy`, then MoA fine-tuning with the
// molecule encoder frozen.
PipelineResult run_pipeline(const TrainConfig &base, const data::DatasetSplit &split,
                            StrategyId strategy = StrategyId::kS3PretrainedSeq);

struct SweepRow {
  double weight = 0.0;
  double rank1 = 0.0;
  double map = 0.0;
  double accuracy = 0.0;
};

std::vector<double> default_sweep_weights();

// One full pipeline per center-loss weight with everything else fixed.
std::vector<SweepRow> sweep_center_weight(const TrainConfig &base, std::span<const double> weights,
                                          const data::DatasetSplit &split,
                                          StrategyId strategy = StrategyId::kS3PretrainedSeq);

// CSV writers used by the CLI.
std::string loss_log_csv(std::span<const StepLog> log);
std::string history_csv(std::span<const EvalRecord> history);
std::string sweep_csv(std::span<const SweepRow> rows);

}  // namespace molalign::harness

#endif  // MOLALIGN_HARNESS_H_
