// Copyright 2026 The molalign Authors.
// SPDX-License-Identifier: Apache-2.0

// Command-line front end: data generation, training, evaluation,
// strategies, the center-weight sweep, gradient checks, and SMILES tools.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "molalign/data.h"
#include "molalign/grad_suite.h"
#include "molalign/harness.h"
#include "molalign/metrics.h"
#include "molalign/smiles.h"

namespace fs = std::filesystem;
using namespace molalign;

namespace {

std::string read_file(const fs::path &path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path &path, const std::string &text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

harness::TrainConfig config_or_default(const std::string &path) {
  return path.empty() ? harness::TrainConfig{} : harness::load_config(path);
}

data::DatasetSplit load_split(const std::string &dir, const harness::TrainConfig &c) {
  const auto samples = data::load_manifest(dir);
  return data::make_split(samples, c.split_ratio, c.seed, c.label_kind(), c.split_by);
}

void print_metrics(const harness::EvalRecord &r) {
  std::printf("accuracy,rank1,rank5,rank10,map\n%.6f,%.6f,%.6f,%.6f,%.6f\n", r.accuracy, r.rank1,
              r.rank5, r.rank10, r.map);
}

// Runs `fn` over non-empty input lines; returns the process exit code.
int for_each_smiles(const std::vector<std::string> &files, bool skip_invalid,
                    const std::function<void(const std::string &)> &fn) {
  std::vector<std::istream *> inputs;
  std::vector<std::unique_ptr<std::ifstream>> owned;
  for (const auto &f : files) {
    owned.push_back(std::make_unique<std::ifstream>(f));
    if (!*owned.back()) throw std::runtime_error("cannot open " + f);
    inputs.push_back(owned.back().get());
  }
  if (inputs.empty()) inputs.push_back(&std::cin);
  std::size_t line_no = 0, failures = 0;
  for (auto *in : inputs) {
    std::string line;
    while (std::getline(*in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      try {
        fn(line);
      } catch (const smiles::SmilesError &e) {
        std::fprintf(stderr, "line %zu: %s\n", line_no, e.what());
        ++failures;
        if (!skip_invalid) return 1;
      }
    }
  }
  if (failures) std::fprintf(stderr, "skipped %zu invalid line(s)\n", failures);
  return 0;
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"molalign: cross-modal alignment of molecules and cell time-lapse features"};
  app.require_subcommand(1);

  std::string spec_path, out_dir, config_path, data_dir, init_path, ckpt_path, cmc_path;
  std::string strategy_id = "S3", weights_csv;
  bool skip_invalid = false;
  std::uint64_t gc_seed = 0;
  std::vector<std::string> inputs;

  auto *gen = app.add_subcommand("gen-data", "Generate a synthetic dataset");
  gen->add_option("--spec", spec_path, "Synthetic spec file (key=value)");
  gen->add_option("--out", out_dir, "Output dataset directory")->required();

  auto *train = app.add_subcommand("train", "Train one stage");
  train->add_option("--config", config_path, "Config file (key=value)")->required();
  train->add_option("--data", data_dir, "Dataset directory")->required();
  train->add_option("--init", init_path, "Checkpoint to initialize from");
  train->add_option("--out", out_dir, "Output directory")->required();

  auto *eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval->add_option("--ckpt", ckpt_path, "Checkpoint file")->required();
  eval->add_option("--data", data_dir, "Dataset directory")->required();
  eval->add_option("--cmc", cmc_path, "Where to write the CMC curve")->default_val("cmc.csv");

  auto *strat = app.add_subcommand("strategy", "Run a pretraining strategy (S1, S2, S3)");
  strat->add_option("--id", strategy_id, "S1, S2, or S3")->required();
  strat->add_option("--data", data_dir, "Dataset directory")->required();
  strat->add_option("--config", config_path, "Config file (key=value)");
  strat->add_option("--out", out_dir, "Output directory for histories and checkpoint");

  auto *pipe = app.add_subcommand("pipeline", "Drug pretraining via a strategy, then MoA fine-tuning");
  pipe->add_option("--strategy", strategy_id, "S1, S2, or S3")->default_val("S3");
  pipe->add_option("--data", data_dir, "Dataset directory")->required();
  pipe->add_option("--config", config_path, "Config file (key=value)");
  pipe->add_option("--out", out_dir, "Output directory for histories and checkpoints");

  auto *sweep = app.add_subcommand("sweep", "Sweep the center-loss weight");
  sweep->add_option("--config", config_path, "Config file (key=value)")->required();
  sweep->add_option("--weights", weights_csv, "Comma-separated weights (default schedule if omitted)");
  sweep->add_option("--data", data_dir, "Dataset directory")->required();
  sweep->add_option("--out", out_dir, "Where to write sweep.csv");

  auto *gc = app.add_subcommand("gradcheck", "Run the finite-difference gradient suite");
  gc->add_option("--seed", gc_seed, "Seed for the random instances");

  auto *tok = app.add_subcommand("tokenize", "Tokenize SMILES, one per line");
  auto *canon = app.add_subcommand("canonicalize", "Canonicalize SMILES, one per line");
  for (auto *sub : {tok, canon}) {
    sub->add_option("files", inputs, "Input files (stdin if none)");
    sub->add_flag("--skip-invalid", skip_invalid, "Report and skip invalid lines");
  }

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      const data::SyntheticSpec spec =
          spec_path.empty() ? data::SyntheticSpec{} : data::parse_synthetic_spec(read_file(spec_path));
      const auto samples = data::generate_synthetic(spec);
      data::save_dataset(out_dir, samples);
      std::printf("wrote %zu samples (%zu drugs, %zu MoAs) to %s\n", samples.size(), spec.num_drugs(),
                  spec.num_moas, out_dir.c_str());
    } else if (*train) {
      const auto config = harness::load_config(config_path);
      const auto split = load_split(data_dir, config);
      std::optional<harness::Checkpoint> init;
      if (!init_path.empty()) init = harness::load_checkpoint(init_path);
      const auto result = harness::run_stage(config, split, init ? &*init : nullptr);
      const fs::path out(out_dir);
      fs::create_directories(out);
      harness::save_checkpoint(out / "checkpoint.txt", result.checkpoint);
      write_file(out / "history.csv", harness::history_csv(result.history));
      write_file(out / "losses.csv", harness::loss_log_csv(result.losses));
      print_metrics(result.final_metrics());
    } else if (*eval) {
      const auto ckpt = harness::load_checkpoint(ckpt_path);
      const auto split = load_split(data_dir, ckpt.config);
      const auto r = harness::evaluate_checkpoint(ckpt, split);
      print_metrics(r);
      std::ostringstream cmc;
      cmc << "rank,cmc\n";
      for (std::size_t k = 0; k < r.cmc.size(); ++k) cmc << (k + 1) << ',' << r.cmc[k] << '\n';
      write_file(cmc_path, cmc.str());
    } else if (*strat) {
      const auto config = config_or_default(config_path);
      const auto split = load_split(data_dir, config);
      const auto id = harness::parse_strategy(strategy_id);
      const auto report = harness::run_strategy(id, config, split);
      std::printf("strategy %s (drug recognition)\n", harness::strategy_name(id));
      print_metrics(report.drug);
      if (!out_dir.empty()) {
        const fs::path out(out_dir);
        fs::create_directories(out);
        harness::save_checkpoint(out / "checkpoint.txt", report.stage.checkpoint);
        write_file(out / "history.csv", harness::history_csv(report.stage.history));
        write_file(out / "losses.csv", harness::loss_log_csv(report.stage.losses));
      }
    } else if (*pipe) {
      const auto config = config_or_default(config_path);
      const auto split = load_split(data_dir, config);
      const auto id = harness::parse_strategy(strategy_id);
      const auto result = harness::run_pipeline(config, split, id);
      std::printf("pretrain %s (drug recognition)\n", harness::strategy_name(id));
      print_metrics(result.pretrain.drug);
      std::printf("finetune (MoA recognition)\n");
      print_metrics(result.finetune.final_metrics());
      if (!out_dir.empty()) {
        const fs::path out(out_dir);
        fs::create_directories(out);
        harness::save_checkpoint(out / "pretrain.ckpt", result.pretrain.stage.checkpoint);
        harness::save_checkpoint(out / "finetune.ckpt", result.finetune.checkpoint);
        write_file(out / "pretrain_history.csv", harness::history_csv(result.pretrain.stage.history));
        write_file(out / "finetune_history.csv", harness::history_csv(result.finetune.history));
        write_file(out / "pretrain_losses.csv", harness::loss_log_csv(result.pretrain.stage.losses));
        write_file(out / "finetune_losses.csv", harness::loss_log_csv(result.finetune.losses));
      }
    } else if (*sweep) {
      const auto config = harness::load_config(config_path);
      std::vector<double> weights;
      if (weights_csv.empty()) {
        weights = harness::default_sweep_weights();
      } else {
        std::stringstream ss(weights_csv);
        std::string item;
        while (std::getline(ss, item, ',')) weights.push_back(std::stod(item));
      }
      const auto split = load_split(data_dir, config);
      const auto rows = harness::sweep_center_weight(config, weights, split);
      const std::string csv = harness::sweep_csv(rows);
      std::fputs(csv.c_str(), stdout);
      if (!out_dir.empty()) write_file(fs::path(out_dir) / "sweep.csv", csv);
    } else if (*gc) {
      bool ok = true;
      for (const auto &e : run_gradient_suite(gc_seed)) {
        std::printf("%-28s %s  max_rel_error=%.3e  coords=%zu\n", e.name.c_str(),
                    e.passed ? "ok  " : "FAIL", e.result.max_rel_error, e.result.coordinates);
        ok = ok && e.passed;
      }
      return ok ? 0 : 1;
    } else if (*tok) {
      return for_each_smiles(inputs, skip_invalid, [](const std::string &s) {
        std::string line;
        for (const auto &t : smiles::tokenize(s)) {
          if (!line.empty()) line += ' ';
          line += t.text;
        }
        std::puts(line.c_str());
      });
    } else if (*canon) {
      return for_each_smiles(inputs, skip_invalid, [](const std::string &s) {
        std::puts(smiles::canonical_smiles(s).c_str());
      });
    }
  } catch (const std::exception &e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
