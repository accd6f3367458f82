// Copyright 2026 The molalign Authors.
// SPDX-License-Identifier: Apache-2.0

// Dataset records, manifest I/O, the synthetic generator, splits, and PK
// batch sampling.
//
// On-disk layout of a dataset directory:
//   manifest.csv   sample_id,drug_id,smiles,drug_label,moa_label,frames_path
//   frames/        one file per sample: uint32 T, uint32 f (little-endian),
//                  then T*f little-endian float64 values, row-major.
// frames_path is relative to the dataset directory.

#ifndef MOLALIGN_DATA_H_
#define MOLALIGN_DATA_H_

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "molalign/tensor.h"

namespace molalign::data {

enum class DataErrorKind {
  kSchemaError,
  kInconsistentDrug,
  kSmilesError,
  kMissingFeatureFile,
  kPoolExhausted,
  kInvalidSpec,
  kEmptyInput,
  kSingletonClass,
  kInsufficientClasses,
  kInsufficientSamples,
};

class DataError : public std::runtime_error {
 public:
  DataError(DataErrorKind kind, const std::string &detail);
  DataErrorKind kind() const { return kind_; }

 private:
  DataErrorKind kind_;
};

struct Sample {
  std::string sample_id;
  std::string drug_id;
  std::string smiles;
  int drug_label = 0;
  int moa_label = 0;
  Tensor frames;  // [T, f]
};

enum class LabelKind { kDrug, kMoa };

inline int label_of(const Sample &s, LabelKind kind) {
  return kind == LabelKind::kDrug ? s.drug_label : s.moa_label;
}
std::vector<int> labels_of(std::span<const Sample> samples, LabelKind kind);
const char *label_kind_name(LabelKind kind);
// Number of classes: max label + 1 over the samples.
std::size_t class_count(std::span<const Sample> samples, LabelKind kind);

// Checks that samples sharing a drug_id agree on smiles and both labels and
// that each drug label maps to one MoA label.
void validate_drug_consistency(std::span<const Sample> samples);

Tensor read_frames(const std::filesystem::path &path);
void write_frames(const std::filesystem::path &path, const Tensor &frames);

struct LoadOptions {
  // Skip records whose SMILES carry stereo or isotope markers instead of
  // failing; the count lands in LoadReport::stereo_rejected.
  bool skip_stereo = false;
};

struct LoadReport {
  std::size_t records = 0;
  std::size_t stereo_rejected = 0;
};

// Reads `<dir>/manifest.csv` (or a manifest path directly), canonicalizing
// each SMILES and loading frame files.
std::vector<Sample> load_manifest(const std::filesystem::path &path, const LoadOptions &options = {},
                                  LoadReport *report = nullptr);
// Writes manifest.csv and frames/ under `dir`.
void save_dataset(const std::filesystem::path &dir, std::span<const Sample> samples);

struct SyntheticSpec {
  std::size_t num_moas = 4;
  std::size_t drugs_per_moa = 3;
  std::size_t samples_per_drug = 40;
  std::size_t frames = 16;
  std::size_t frame_dim = 32;
  std::uint64_t seed = 0;
  double separability = 2.5;
  double confounding = 0.2;

  std::size_t num_drugs() const { return num_moas * drugs_per_moa; }
  std::size_t num_samples() const { return num_drugs() * samples_per_drug; }
};

// Flat key=value text (num_moas, drugs_per_moa, samples_per_drug, frames,
// frame_dim, seed, separability, confounding); '#' starts a comment.
// Unknown keys and malformed values throw InvalidSpec.
SyntheticSpec parse_synthetic_spec(const std::string &text);

// Norm of the per-drug offset from its MoA direction before confounding
// shrinks it.
inline constexpr double kDrugOffsetScale = 0.3;

// Canonical, stereo-free SMILES shipped with the library.
const std::vector<std::string> &builtin_smiles_pool();

std::vector<Sample> generate_synthetic(const SyntheticSpec &spec);

// Per-drug stratified split; each drug with n >= 2 samples contributes
// round(ratio * n) clamped to [1, n-1] samples to train.
std::pair<std::vector<Sample>, std::vector<Sample>> split_train_test(std::span<const Sample> samples,
                                                                     double ratio,
                                                                     std::uint64_t seed);

// Drug-disjoint split: within each MoA, round(ratio * drugs) whole drugs
// (clamped to [1, drugs-1] when there are at least two) go to train.
// Drug-label accuracy on the test side is meaningless under this split.
std::pair<std::vector<Sample>, std::vector<Sample>> split_by_drug(std::span<const Sample> samples,
                                                                  double ratio, std::uint64_t seed);

// One uniformly chosen query per class; the rest form the gallery.
std::pair<std::vector<Sample>, std::vector<Sample>> split_query_gallery(
    std::span<const Sample> test, std::uint64_t seed, LabelKind kind = LabelKind::kMoa);

struct DatasetSplit {
  std::vector<Sample> train;
  std::vector<Sample> test;
  std::vector<Sample> query;
  std::vector<Sample> gallery;
  LabelKind query_kind = LabelKind::kMoa;
};

enum class SplitBy { kSample, kDrug };

DatasetSplit make_split(std::span<const Sample> samples, double ratio, std::uint64_t seed,
                        LabelKind query_kind, SplitBy by = SplitBy::kSample);
// Same train/test, query/gallery re-drawn for another label kind.
DatasetSplit with_query_kind(const DatasetSplit &split, std::uint64_t seed, LabelKind kind);

// P distinct classes with K samples each, without replacement within the
// batch; a deterministic function of (samples, seed, step). Returns indices
// into `train`, grouped by class.
std::vector<std::size_t> pk_sample_indices(std::span<const Sample> train, std::size_t p,
                                           std::size_t k, LabelKind kind, std::uint64_t seed,
                                           std::uint64_t step);
std::vector<Sample> pk_sample(std::span<const Sample> train, std::size_t p, std::size_t k,
                              LabelKind kind, std::uint64_t seed, std::uint64_t step);

}  // namespace molalign::data

#endif  // MOLALIGN_DATA_H_
