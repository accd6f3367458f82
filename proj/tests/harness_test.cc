// Copyright 2026 The molalign Authors.
// SPDX-License-Identifier: Apache-2.0

#include "molalign/harness.h"

#include <cmath>
#include <filesystem>

#include <gtest/gtest.h>

namespace molalign::harness {
namespace {

// Three MoAs, two drugs each, short sequences: fast enough for many runs.
data::DatasetSplit tiny_split(double separability = 2.5, std::uint64_t seed = 1) {
  data::SyntheticSpec spec;
  spec.num_moas = 3;
  spec.drugs_per_moa = 2;
  spec.samples_per_drug = 12;
  spec.frames = 4;
  spec.frame_dim = 8;
  spec.separability = separability;
  spec.seed = seed;
  const auto samples = data::generate_synthetic(spec);
  return data::make_split(samples, 0.75, seed, data::LabelKind::kDrug);
}

TrainConfig tiny_config() {
  TrainConfig c;
  c.epochs = 4;
  c.p = 6;
  c.k = 3;
  c.embed_dim = 16;
  c.hidden_dim = 16;
  c.token_dim = 8;
  c.max_len = 32;
  c.learning_rate = 0.01;
  c.seed = 5;
  return c;
}

std::map<std::string, Tensor> values_of(const Checkpoint &ckpt) {
  std::map<std::string, Tensor> out;
  for (const auto &p : ckpt.params) out[p.name] = p.value;
  return out;
}

void expect_ranks_ordered(const std::vector<EvalRecord> &history) {
  for (const auto &r : history) {
    EXPECT_LE(r.rank1, r.rank5);
    EXPECT_LE(r.rank5, r.rank10);
    EXPECT_GE(r.map, 0.0);
    EXPECT_LE(r.map, 1.0);
  }
}

TEST(SgdTest, PlainStep) {
  ParameterSet params;
  params.add("w", Tensor::vector({0.0}));
  Velocity v;
  const std::vector<Tensor> g{Tensor::vector({1.0})};
  sgd_step(params, g, v, 0.1, 0.0);
  EXPECT_DOUBLE_EQ(params.get("w").var.value()[0], -0.1);
}

TEST(SgdTest, ZeroGradientDecaysVelocity) {
  ParameterSet params;
  params.add("w", Tensor::vector({1.0, 2.0}));
  Velocity v{{"w", Tensor::vector({0.5, -1.0})}};
  const std::vector<Tensor> g{Tensor::vector({0.0, 0.0})};
  sgd_step(params, g, v, 0.0, 0.9);
  EXPECT_TRUE(params.get("w").var.value() == Tensor::vector({1.0, 2.0}));
  EXPECT_DOUBLE_EQ(v["w"][0], 0.45);
  EXPECT_DOUBLE_EQ(v["w"][1], -0.9);
}

TEST(SgdTest, TwoMomentumSteps) {
  ParameterSet params;
  params.add("w", Tensor::vector({0.0}));
  Velocity v;
  const double lr = 0.05, g = 2.0;
  const std::vector<Tensor> grads{Tensor::vector({g})};
  sgd_step(params, grads, v, lr, 0.9);
  sgd_step(params, grads, v, lr, 0.9);
  EXPECT_NEAR(params.get("w").var.value()[0], -lr * g * (1 + 1.9), 1e-15);
}

TEST(SgdTest, ShapeMismatchAndFrozen) {
  ParameterSet params;
  params.add("w", Tensor::vector({0.0, 0.0}));
  params.add("frozen", Tensor::vector({3.0}), false);
  Velocity v;
  const std::vector<Tensor> bad{Tensor::vector({1.0}), Tensor::vector({1.0})};
  EXPECT_THROW(sgd_step(params, bad, v, 0.1, 0.9), TensorError);
  const std::vector<Tensor> good{Tensor::vector({1.0, 1.0}), Tensor::vector({1.0})};
  sgd_step(params, good, v, 0.1, 0.9);
  EXPECT_EQ(params.get("frozen").var.value()[0], 3.0);
  EXPECT_EQ(v.count("frozen"), 0u);
}

TEST(ConfigTest, ParseAndRoundTrip) {
  const TrainConfig c = parse_config(
      "epochs = 7  # short\n"
      "w_center=0.25\n"
      "stage=finetune_moa\n"
      "freeze_molecule_encoder=false\n"
      "learning_rate=0.003\n"
      "mclass_labels=moa\n"
      "split_by=drug\n");
  EXPECT_EQ(c.epochs, 7u);
  EXPECT_EQ(c.weights.w_center, 0.25);
  EXPECT_FALSE(c.freeze_molecule());
  EXPECT_EQ(c.label_kind(), data::LabelKind::kMoa);
  const TrainConfig back = parse_config(serialize_config(c));
  EXPECT_EQ(serialize_config(back), serialize_config(c));
  EXPECT_EQ(back.learning_rate, 0.003);
  EXPECT_EQ(back.split_by, data::SplitBy::kDrug);
}

TEST(ConfigTest, Defaults) {
  const TrainConfig c;
  EXPECT_EQ(c.p * c.k, 64u);
  EXPECT_EQ(c.weights.w_center, 0.1);
  EXPECT_EQ(c.weights.margin, 0.3);
  EXPECT_EQ(c.momentum, 0.9);
  EXPECT_FALSE(c.freeze_molecule());
  TrainConfig f;
  f.stage = Stage::kFinetuneMoa;
  EXPECT_TRUE(f.freeze_molecule());
}

TEST(ConfigTest, Rejections) {
  EXPECT_THROW(parse_config("colour=blue\n"), ConfigError);
  EXPECT_THROW(parse_config("epochs=abc\n"), ConfigError);
  EXPECT_THROW(parse_config("epochs=0\n"), ConfigError);
  EXPECT_THROW(parse_config("momentum=1.0\n"), ConfigError);
  EXPECT_THROW(parse_config("w_center=-0.1\n"), ConfigError);
  EXPECT_THROW(parse_config("nokey\n"), ConfigError);
  EXPECT_THROW(parse_config("split_by=moa\n"), ConfigError);
  EXPECT_THROW(parse_strategy("S4"), ConfigError);
  EXPECT_EQ(parse_strategy("S3"), StrategyId::kS3PretrainedSeq);
}

class StageTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    split_ = new data::DatasetSplit(tiny_split());
    TrainConfig c = tiny_config();
    c.eval_every = 2;
    result_ = new StageResult(run_stage(c, *split_, nullptr, RunOptions{{0, 5}, ""}));
  }
  static void TearDownTestSuite() {
    delete result_;
    delete split_;
  }
  static data::DatasetSplit *split_;
  static StageResult *result_;
};
data::DatasetSplit *StageTest::split_ = nullptr;
StageResult *StageTest::result_ = nullptr;

TEST_F(StageTest, HistoryAndLogs) {
  // 54 train samples, batch 18: three steps per epoch.
  EXPECT_EQ(result_->batch_p * result_->batch_k, 18u);
  EXPECT_EQ(result_->losses.size(), 12u);
  EXPECT_EQ(result_->checkpoint.step, 12u);
  ASSERT_EQ(result_->history.size(), 2u);
  EXPECT_EQ(result_->history.back().epoch, 4u);
  expect_ranks_ordered(result_->history);
  for (const auto &l : result_->losses) {
    EXPECT_TRUE(l.report.msc && l.report.triplet && l.report.center && l.report.cls);
    EXPECT_TRUE(std::isfinite(l.report.total));
  }
}

TEST_F(StageTest, Deterministic) {
  TrainConfig c = tiny_config();
  c.eval_every = 2;
  const StageResult again = run_stage(c, *split_);
  EXPECT_EQ(again.history, result_->history);
  EXPECT_EQ(checkpoint_to_string(again.checkpoint), checkpoint_to_string(result_->checkpoint));
}

TEST_F(StageTest, LoggedLossIsReproducibleFromSnapshot) {
  for (std::uint64_t step : {0u, 5u}) {
    ASSERT_TRUE(result_->snapshots.count(step));
    const Checkpoint &snap = result_->snapshots.at(step);
    EXPECT_EQ(snap.step, step);
    const auto r = recompute_step_loss(snap, *split_);
    const auto &logged = result_->losses[step].report;
    EXPECT_EQ(r.total, logged.total);
    EXPECT_EQ(r.msc, logged.msc);
    EXPECT_EQ(r.triplet, logged.triplet);
    EXPECT_EQ(r.center, logged.center);
    EXPECT_EQ(r.cls, logged.cls);
  }
}

TEST_F(StageTest, CheckpointRoundTrip) {
  const std::string text = checkpoint_to_string(result_->checkpoint);
  const Checkpoint back = checkpoint_from_string(text);
  EXPECT_EQ(checkpoint_to_string(back), text);
  EXPECT_EQ(values_of(back).size(), result_->checkpoint.params.size());
  EXPECT_TRUE(back.centers.centers == result_->checkpoint.centers.centers);
  EXPECT_EQ(back.vocab, result_->checkpoint.vocab);
  EXPECT_EQ(evaluate_checkpoint(back, *split_), evaluate_checkpoint(result_->checkpoint, *split_));

  const auto path = std::filesystem::temp_directory_path() / "molalign_harness_test.ckpt";
  save_checkpoint(path, result_->checkpoint);
  EXPECT_EQ(checkpoint_to_string(load_checkpoint(path)), text);
  std::filesystem::remove(path);
}

TEST_F(StageTest, CheckpointRejectsWrongTag) {
  std::string text = checkpoint_to_string(result_->checkpoint);
  text.replace(0, std::string(kCheckpointTag).size(), "molalign-ckpt v0");
  EXPECT_THROW(checkpoint_from_string(text), CheckpointError);
  EXPECT_THROW(checkpoint_from_string(text.substr(0, text.size() / 2)), CheckpointError);
}

TEST_F(StageTest, EvaluateCheckpointMatchesFinalHistory) {
  EvalRecord r = evaluate_checkpoint(result_->checkpoint, *split_);
  const EvalRecord &last = result_->final_metrics();
  EXPECT_EQ(r.accuracy, last.accuracy);
  EXPECT_EQ(r.map, last.map);
  EXPECT_EQ(r.cmc, last.cmc);
}

TEST_F(StageTest, FrozenMoleculeEncoderDuringFinetune) {
  TrainConfig c = tiny_config();
  c.stage = Stage::kFinetuneMoa;
  const StageResult ft = run_stage(c, *split_, &result_->checkpoint);
  const auto before = values_of(result_->checkpoint), after = values_of(ft.checkpoint);
  std::size_t mol = 0;
  for (const auto &[name, value] : after) {
    if (name.starts_with("mol.")) {
      ++mol;
      EXPECT_TRUE(value == before.at(name)) << name;
    }
  }
  EXPECT_GT(mol, 0u);
  EXPECT_FALSE(after.at("seq.fc1.weight") == before.at("seq.fc1.weight"));
  EXPECT_EQ(ft.checkpoint.centers.num_classes(), 3u);
}

TEST(RunStageTest, ZeroWeightsNeverChangeParameters) {
  const auto split = tiny_split();
  TrainConfig c = tiny_config();
  c.weights = loss::LossWeights{0, 0, 0, 0, 0.3};
  c.epochs = 2;
  const StageResult r = run_stage(c, split, nullptr, RunOptions{{0}, ""});
  const auto before = values_of(r.snapshots.at(0)), after = values_of(r.checkpoint);
  for (const auto &[name, value] : after) EXPECT_TRUE(value == before.at(name)) << name;
  for (const auto &l : r.losses) EXPECT_EQ(l.report.total, 0.0);
}

TEST(RunStageTest, RejectsZeroEpochs) {
  TrainConfig c = tiny_config();
  c.epochs = 0;
  EXPECT_THROW(run_stage(c, tiny_split()), ConfigError);
}

TEST(RunStageTest, FitBatchShrinksP) {
  const auto split = tiny_split();
  TrainConfig c = tiny_config();
  c.p = 16;
  c.k = 4;
  c.epochs = 1;
  c.stage = Stage::kFinetuneMoa;
  const StageResult r = run_stage(c, split);
  EXPECT_EQ(r.batch_p, 3u);
  EXPECT_GE(r.batch_p * r.batch_k, 48u);
  c.fit_batch = false;
  EXPECT_THROW(run_stage(c, split), data::DataError);
}

TEST(StrategyTest, SequenceOnlyHasNoAlignmentHistory) {
  const auto split = tiny_split();
  const StrategyReport s1 = run_strategy(StrategyId::kS1SeqOnly, tiny_config(), split);
  EXPECT_FALSE(s1.has_alignment_history());
  for (const auto &l : s1.stage.losses) EXPECT_FALSE(l.report.msc.has_value());
  const StrategyReport s2 = run_strategy(StrategyId::kS2FreshSeq, tiny_config(), split);
  EXPECT_TRUE(s2.has_alignment_history());
  EXPECT_FALSE(s2.seq_pretrain.has_value());
}

TEST(StrategyTest, S3StartsFromSequenceOnlyWeights) {
  const auto split = tiny_split();
  const StrategyReport s3 = run_strategy(StrategyId::kS3PretrainedSeq, tiny_config(), split);
  ASSERT_TRUE(s3.seq_pretrain.has_value());
  EXPECT_FALSE(s3.seq_pretrain->losses.front().report.msc.has_value());
  EXPECT_TRUE(s3.has_alignment_history());
  EXPECT_EQ(s3.drug, s3.stage.final_metrics());

  // The stage-1 checkpoint feeds stage 2 without shape errors.
  TrainConfig c = tiny_config();
  c.stage = Stage::kFinetuneMoa;
  EXPECT_NO_THROW(run_stage(c, split, &s3.stage.checkpoint));
}

TEST(PipelineTest, Deterministic) {
  const auto split = tiny_split();
  TrainConfig c = tiny_config();
  c.eval_every = 1;
  const PipelineResult a = run_pipeline(c, split), b = run_pipeline(c, split);
  EXPECT_EQ(a.pretrain.stage.history, b.pretrain.stage.history);
  EXPECT_EQ(a.finetune.history, b.finetune.history);
  EXPECT_EQ(a.finetune.history.size(), 4u);
  expect_ranks_ordered(a.finetune.history);
  EXPECT_EQ(a.finetune.checkpoint.config.stage, Stage::kFinetuneMoa);
}

TEST(SweepTest, RowCount) {
  const auto split = tiny_split();
  TrainConfig c = tiny_config();
  c.epochs = 1;
  const std::vector<double> one{0.1}, three{0.0, 0.1, 1.0};
  EXPECT_EQ(sweep_center_weight(c, one, split).size(), 1u);
  const auto rows = sweep_center_weight(c, three, split);
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[2].weight, 1.0);
  EXPECT_EQ(sweep_csv(rows).substr(0, 25), "weight,rank1,map,accuracy");
  EXPECT_THROW(sweep_center_weight(c, std::vector<double>{}, split), ConfigError);
  EXPECT_THROW(sweep_center_weight(c, std::vector<double>{-1.0}, split), ConfigError);
}

TEST(SweepTest, DefaultSchedule) {
  EXPECT_EQ(default_sweep_weights(),
            (std::vector<double>{0.01, 0.02, 0.04, 0.06, 0.08, 0.1, 0.3, 0.5, 0.7, 0.9}));
}

TEST(PipelineTest, NoSignalStaysNearChance) {
  data::SyntheticSpec spec;
  spec.separability = 0.0;
  spec.seed = 3;
  const auto samples = data::generate_synthetic(spec);
  const auto split = data::make_split(samples, 0.8, 3, data::LabelKind::kDrug);
  TrainConfig c;
  c.seed = 3;
  c.epochs = 30;
  const PipelineResult r = run_pipeline(c, split);
  EXPECT_NEAR(r.finetune.final_metrics().accuracy, 0.25, 0.10);
}

TEST(CsvTest, Headers) {
  EXPECT_EQ(loss_log_csv({}), "step,msc,triplet,center,cls,total\n");
  EXPECT_EQ(history_csv({}), "epoch,step,accuracy,rank1,rank5,rank10,map\n");
}

}  // namespace
}  // namespace molalign::harness
