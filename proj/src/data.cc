// Copyright 2026 The molalign Authors.
// SPDX-License-Identifier: Apache-2.0

#include "molalign/data.h"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <numeric>
#include <sstream>

#include "molalign/rng.h"
#include "molalign/smiles.h"

// Generated from data/smiles_pool.smi at build time.
extern const char *const kMolalignSmilesPool[];
extern const std::size_t kMolalignSmilesPoolSize;

namespace molalign::data {

namespace {

const char *kind_name(DataErrorKind kind) {
  switch (kind) {
    case DataErrorKind::kSchemaError: return "SchemaError";
    case DataErrorKind::kInconsistentDrug: return "InconsistentDrug";
    case DataErrorKind::kSmilesError: return "SmilesError";
    case DataErrorKind::kMissingFeatureFile: return "MissingFeatureFile";
    case DataErrorKind::kPoolExhausted: return "PoolExhausted";
    case DataErrorKind::kInvalidSpec: return "InvalidSpec";
    case DataErrorKind::kEmptyInput: return "EmptyInput";
    case DataErrorKind::kSingletonClass: return "SingletonClass";
    case DataErrorKind::kInsufficientClasses: return "InsufficientClasses";
    case DataErrorKind::kInsufficientSamples: return "InsufficientSamples";
  }
  return "DataError";
}

// Stream tags for derive_seed.
enum Stream : std::uint64_t {
  kPoolStream = 11,
  kMoaStream,
  kDrugStream,
  kFrameStream,
  kSplitStream,
  kQueryStream,
  kPkStream,
  kDrugSplitStream,
};

std::vector<std::string> split_fields(const std::string &line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

bool parse_label(const std::string &s, int &out) {
  const char *end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end && out >= 0;
}

std::string strip(std::string s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.pop_back();
  std::size_t i = 0;
  while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
  return s.substr(i);
}

std::uint32_t read_u32(std::istream &in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char *>(b), 4);
  return static_cast<std::uint32_t>(b[0]) | static_cast<std::uint32_t>(b[1]) << 8 |
         static_cast<std::uint32_t>(b[2]) << 16 | static_cast<std::uint32_t>(b[3]) << 24;
}

void write_u32(std::ostream &out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char *>(b), 4);
}

Tensor unit_normal(Rng &rng, std::size_t dim) {
  Tensor v({dim});
  double norm = 0.0;
  for (auto &x : v.data()) {
    x = rng.normal();
    norm += x * x;
  }
  norm = std::sqrt(norm);
  for (auto &x : v.data()) x /= norm;
  return v;
}

std::map<int, std::vector<std::size_t>> group_by_label(std::span<const Sample> samples, LabelKind kind) {
  std::map<int, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < samples.size(); ++i) groups[label_of(samples[i], kind)].push_back(i);
  return groups;
}

}  // namespace

DataError::DataError(DataErrorKind kind, const std::string &detail)
    : std::runtime_error(std::string(kind_name(kind)) + ": " + detail), kind_(kind) {}

std::vector<int> labels_of(std::span<const Sample> samples, LabelKind kind) {
  std::vector<int> out;
  out.reserve(samples.size());
  for (const auto &s : samples) out.push_back(label_of(s, kind));
  return out;
}

const char *label_kind_name(LabelKind kind) { return kind == LabelKind::kDrug ? "drug" : "moa"; }

std::size_t class_count(std::span<const Sample> samples, LabelKind kind) {
  int mx = -1;
  for (const auto &s : samples) mx = std::max(mx, label_of(s, kind));
  return static_cast<std::size_t>(mx + 1);
}

void validate_drug_consistency(std::span<const Sample> samples) {
  std::map<std::string, const Sample *> first;
  std::map<int, int> drug_to_moa;
  for (const auto &s : samples) {
    auto [it, inserted] = first.emplace(s.drug_id, &s);
    const Sample &ref = *it->second;
    if (!inserted && (ref.smiles != s.smiles || ref.drug_label != s.drug_label ||
                      ref.moa_label != s.moa_label)) {
      throw DataError(DataErrorKind::kInconsistentDrug,
                      s.drug_id + " (sample " + s.sample_id + " disagrees with " + ref.sample_id + ")");
    }
    auto [mit, fresh] = drug_to_moa.emplace(s.drug_label, s.moa_label);
    if (!fresh && mit->second != s.moa_label) {
      throw DataError(DataErrorKind::kInconsistentDrug,
                      s.drug_id + " (drug label " + std::to_string(s.drug_label) +
                          " maps to more than one MoA)");
    }
  }
}

Tensor read_frames(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(DataErrorKind::kMissingFeatureFile, path.string());
  const std::uint32_t t = read_u32(in);
  const std::uint32_t f = read_u32(in);
  if (!in) throw DataError(DataErrorKind::kSchemaError, path.string() + ": truncated header");
  std::vector<double> values(static_cast<std::size_t>(t) * f);
  for (auto &v : values) {
    unsigned char b[8];
    in.read(reinterpret_cast<char *>(b), 8);
    std::uint64_t bits = 0;
    for (int i = 7; i >= 0; --i) bits = bits << 8 | b[i];
    v = std::bit_cast<double>(bits);
  }
  if (!in) throw DataError(DataErrorKind::kSchemaError, path.string() + ": truncated payload");
  return Tensor({t, f}, std::move(values));
}

void write_frames(const std::filesystem::path &path, const Tensor &frames) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(DataErrorKind::kMissingFeatureFile, "cannot write " + path.string());
  write_u32(out, static_cast<std::uint32_t>(frames.rows()));
  write_u32(out, static_cast<std::uint32_t>(frames.cols()));
  for (double v : frames.data()) {
    std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
    out.write(reinterpret_cast<const char *>(b), 8);
  }
}

std::vector<Sample> load_manifest(const std::filesystem::path &path, const LoadOptions &options,
                                  LoadReport *report) {
  const std::filesystem::path manifest =
      std::filesystem::is_directory(path) ? path / "manifest.csv" : path;
  const std::filesystem::path root = manifest.parent_path();
  std::ifstream in(manifest);
  if (!in) throw DataError(DataErrorKind::kSchemaError, "cannot open " + manifest.string());

  LoadReport local;
  std::vector<Sample> samples;
  std::string raw;
  std::size_t line_no = 0;
  std::size_t frame_dim = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = strip(raw);
    if (line.empty()) continue;
    if (line.rfind("sample_id,", 0) == 0) continue;
    const std::string where = "line " + std::to_string(line_no);
    const auto fields = split_fields(line);
    if (fields.size() != 6) {
      throw DataError(DataErrorKind::kSchemaError,
                      where + ": expected 6 fields, got " + std::to_string(fields.size()));
    }
    ++local.records;
    Sample s;
    s.sample_id = fields[0];
    s.drug_id = fields[1];
    if (s.sample_id.empty() || s.drug_id.empty()) {
      throw DataError(DataErrorKind::kSchemaError, where + ": empty id");
    }
    if (!parse_label(fields[3], s.drug_label) || !parse_label(fields[4], s.moa_label)) {
      throw DataError(DataErrorKind::kSchemaError, where + ": labels must be non-negative integers");
    }
    try {
      s.smiles = smiles::canonical_smiles(fields[2]);
    } catch (const smiles::SmilesError &e) {
      if (options.skip_stereo && e.kind() == smiles::SmilesErrorKind::kStereoUnsupported) {
        ++local.stereo_rejected;
        continue;
      }
      throw DataError(DataErrorKind::kSmilesError, where + ": " + e.what());
    }
    if (fields[5].empty()) throw DataError(DataErrorKind::kSchemaError, where + ": empty frames_path");
    const std::filesystem::path frames_path = root / fields[5];
    if (!std::filesystem::exists(frames_path)) {
      throw DataError(DataErrorKind::kMissingFeatureFile, frames_path.string());
    }
    s.frames = read_frames(frames_path);
    if (s.frames.rows() == 0) throw DataError(DataErrorKind::kSchemaError, where + ": zero frames");
    if (frame_dim == 0) frame_dim = s.frames.cols();
    if (s.frames.cols() != frame_dim) {
      throw DataError(DataErrorKind::kSchemaError, where + ": frame width " +
                                                       std::to_string(s.frames.cols()) + " differs from " +
                                                       std::to_string(frame_dim));
    }
    samples.push_back(std::move(s));
  }
  validate_drug_consistency(samples);
  if (report) *report = local;
  return samples;
}

void save_dataset(const std::filesystem::path &dir, std::span<const Sample> samples) {
  std::filesystem::create_directories(dir / "frames");
  std::ofstream out(dir / "manifest.csv");
  if (!out) throw DataError(DataErrorKind::kSchemaError, "cannot write " + (dir / "manifest.csv").string());
  out << "sample_id,drug_id,smiles,drug_label,moa_label,frames_path\n";
  for (const auto &s : samples) {
    const std::string rel = "frames/" + s.sample_id + ".bin";
    write_frames(dir / rel, s.frames);
    out << s.sample_id << ',' << s.drug_id << ',' << s.smiles << ',' << s.drug_label << ','
        << s.moa_label << ',' << rel << '\n';
  }
}

const std::vector<std::string> &builtin_smiles_pool() {
  static const std::vector<std::string> pool(kMolalignSmilesPool,
                                             kMolalignSmilesPool + kMolalignSmilesPoolSize);
  return pool;
}

SyntheticSpec parse_synthetic_spec(const std::string &text) {
  SyntheticSpec spec;
  std::istringstream in(text);
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = strip(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const std::string where = "spec line " + std::to_string(line_no);
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw DataError(DataErrorKind::kInvalidSpec, where + ": expected key=value");
    const std::string key = strip(line.substr(0, eq));
    const std::string val = strip(line.substr(eq + 1));
    auto bad = [&] { throw DataError(DataErrorKind::kInvalidSpec, where + ": bad value for " + key); };
    auto count = [&](auto &dst) {
      const char *end = val.data() + val.size();
      auto [ptr, ec] = std::from_chars(val.data(), end, dst);
      if (ec != std::errc() || ptr != end) bad();
    };
    auto real = [&](double &dst) {
      char *end = nullptr;
      dst = std::strtod(val.c_str(), &end);
      if (val.empty() || end != val.c_str() + val.size()) bad();
    };
    if (key == "num_moas") count(spec.num_moas);
    else if (key == "drugs_per_moa") count(spec.drugs_per_moa);
    else if (key == "samples_per_drug") count(spec.samples_per_drug);
    else if (key == "frames") count(spec.frames);
    else if (key == "frame_dim") count(spec.frame_dim);
    else if (key == "seed") count(spec.seed);
    else if (key == "separability") real(spec.separability);
    else if (key == "confounding") real(spec.confounding);
    else throw DataError(DataErrorKind::kInvalidSpec, where + ": unknown key '" + key + "'");
  }
  return spec;
}

std::vector<Sample> generate_synthetic(const SyntheticSpec &spec) {
  if (spec.num_moas == 0 || spec.drugs_per_moa == 0 || spec.samples_per_drug == 0 ||
      spec.frames == 0 || spec.frame_dim == 0) {
    throw DataError(DataErrorKind::kInvalidSpec, "all counts must be positive");
  }
  if (!(spec.separability >= 0.0) || !(spec.confounding >= 0.0 && spec.confounding <= 1.0)) {
    throw DataError(DataErrorKind::kInvalidSpec, "separability >= 0 and confounding in [0, 1] required");
  }
  const auto &pool = builtin_smiles_pool();
  if (spec.num_drugs() > pool.size()) {
    throw DataError(DataErrorKind::kPoolExhausted, std::to_string(spec.num_drugs()) +
                                                       " drugs requested, pool holds " +
                                                       std::to_string(pool.size()));
  }

  std::vector<std::size_t> order(pool.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng pool_rng(derive_seed(spec.seed, kPoolStream));
  pool_rng.shuffle(order);

  const std::size_t f = spec.frame_dim;
  const double offset_scale = kDrugOffsetScale * (1.0 - spec.confounding);
  std::vector<Sample> samples;
  samples.reserve(spec.num_samples());
  char buf[32];
  for (std::size_t m = 0; m < spec.num_moas; ++m) {
    Rng moa_rng(derive_seed(spec.seed, kMoaStream, m));
    const Tensor moa_dir = unit_normal(moa_rng, f);
    for (std::size_t k = 0; k < spec.drugs_per_moa; ++k) {
      const std::size_t drug = m * spec.drugs_per_moa + k;
      Rng drug_rng(derive_seed(spec.seed, kDrugStream, drug));
      const Tensor offset = unit_normal(drug_rng, f);
      Tensor center({f});
      for (std::size_t j = 0; j < f; ++j) {
        center[j] = spec.separability * (moa_dir[j] + offset_scale * offset[j]);
      }
      std::snprintf(buf, sizeof buf, "D%04zu", drug);
      const std::string drug_id = buf;
      const std::string &smiles = pool[order[drug]];
      for (std::size_t s = 0; s < spec.samples_per_drug; ++s) {
        const std::size_t idx = drug * spec.samples_per_drug + s;
        Rng frame_rng(derive_seed(spec.seed, kFrameStream, idx));
        Tensor frames({spec.frames, f});
        for (std::size_t t = 0; t < spec.frames; ++t)
          for (std::size_t j = 0; j < f; ++j) frames(t, j) = center[j] + frame_rng.normal();
        std::snprintf(buf, sizeof buf, "S%06zu", idx);
        samples.push_back(Sample{buf, drug_id, smiles, static_cast<int>(drug), static_cast<int>(m),
                                 std::move(frames)});
      }
    }
  }
  return samples;
}

std::pair<std::vector<Sample>, std::vector<Sample>> split_train_test(std::span<const Sample> samples,
                                                                     double ratio,
                                                                     std::uint64_t seed) {
  if (samples.empty()) throw DataError(DataErrorKind::kEmptyInput, "no samples to split");
  if (!(ratio > 0.0 && ratio < 1.0)) {
    throw DataError(DataErrorKind::kInvalidSpec, "split ratio must lie in (0, 1)");
  }
  // Drugs in order of first appearance.
  std::vector<std::string> drug_order;
  std::map<std::string, std::vector<std::size_t>> by_drug;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    auto &bucket = by_drug[samples[i].drug_id];
    if (bucket.empty()) drug_order.push_back(samples[i].drug_id);
    bucket.push_back(i);
  }
  std::vector<bool> in_train(samples.size(), false);
  for (std::size_t d = 0; d < drug_order.size(); ++d) {
    std::vector<std::size_t> idx = by_drug[drug_order[d]];
    const std::size_t n = idx.size();
    std::size_t n_train = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n)));
    if (n >= 2) n_train = std::clamp<std::size_t>(n_train, 1, n - 1);
    else n_train = n;
    Rng rng(derive_seed(seed, kSplitStream, d));
    rng.shuffle(idx);
    for (std::size_t i = 0; i < n_train; ++i) in_train[idx[i]] = true;
  }
  std::pair<std::vector<Sample>, std::vector<Sample>> out;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    (in_train[i] ? out.first : out.second).push_back(samples[i]);
  }
  return out;
}

std::pair<std::vector<Sample>, std::vector<Sample>> split_by_drug(std::span<const Sample> samples,
                                                                  double ratio, std::uint64_t seed) {
  if (samples.empty()) throw DataError(DataErrorKind::kEmptyInput, "no samples to split");
  if (!(ratio > 0.0 && ratio < 1.0)) {
    throw DataError(DataErrorKind::kInvalidSpec, "split ratio must lie in (0, 1)");
  }
  // MoAs in order of first appearance, each with its drugs in the same order.
  std::vector<int> moa_order;
  std::map<int, std::vector<std::string>> drugs_of;
  std::set<std::string> seen;
  for (const auto &s : samples) {
    auto &drugs = drugs_of[s.moa_label];
    if (drugs.empty()) moa_order.push_back(s.moa_label);
    if (seen.insert(s.drug_id).second) drugs.push_back(s.drug_id);
  }
  std::set<std::string> train_drugs;
  for (std::size_t m = 0; m < moa_order.size(); ++m) {
    std::vector<std::string> drugs = drugs_of[moa_order[m]];
    const std::size_t n = drugs.size();
    std::size_t n_train = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n)));
    if (n >= 2) n_train = std::clamp<std::size_t>(n_train, 1, n - 1);
    else n_train = n;
    Rng rng(derive_seed(seed, kDrugSplitStream, m));
    rng.shuffle(drugs);
    train_drugs.insert(drugs.begin(), drugs.begin() + static_cast<std::ptrdiff_t>(n_train));
  }
  std::pair<std::vector<Sample>, std::vector<Sample>> out;
  for (const auto &s : samples) (train_drugs.count(s.drug_id) ? out.first : out.second).push_back(s);
  return out;
}

std::pair<std::vector<Sample>, std::vector<Sample>> split_query_gallery(std::span<const Sample> test,
                                                                        std::uint64_t seed,
                                                                        LabelKind kind) {
  if (test.empty()) throw DataError(DataErrorKind::kEmptyInput, "empty test set");
  const auto groups = group_by_label(test, kind);
  Rng rng(derive_seed(seed, kQueryStream));
  std::vector<bool> is_query(test.size(), false);
  std::vector<std::size_t> query_idx;
  for (const auto &[label, members] : groups) {
    if (members.size() < 2) {
      throw DataError(DataErrorKind::kSingletonClass, std::string(label_kind_name(kind)) + " " +
                                                          std::to_string(label) +
                                                          " has a single test sample");
    }
    const std::size_t pick = members[rng.index(members.size())];
    is_query[pick] = true;
    query_idx.push_back(pick);
  }
  std::pair<std::vector<Sample>, std::vector<Sample>> out;
  for (std::size_t i : query_idx) out.first.push_back(test[i]);
  for (std::size_t i = 0; i < test.size(); ++i)
    if (!is_query[i]) out.second.push_back(test[i]);
  return out;
}

DatasetSplit make_split(std::span<const Sample> samples, double ratio, std::uint64_t seed,
                        LabelKind query_kind, SplitBy by) {
  DatasetSplit split;
  std::tie(split.train, split.test) =
      by == SplitBy::kDrug ? split_by_drug(samples, ratio, seed) : split_train_test(samples, ratio, seed);
  std::tie(split.query, split.gallery) = split_query_gallery(split.test, seed, query_kind);
  split.query_kind = query_kind;
  return split;
}

DatasetSplit with_query_kind(const DatasetSplit &split, std::uint64_t seed, LabelKind kind) {
  if (split.query_kind == kind && !split.query.empty()) return split;
  DatasetSplit out;
  out.train = split.train;
  out.test = split.test;
  std::tie(out.query, out.gallery) = split_query_gallery(out.test, seed, kind);
  out.query_kind = kind;
  return out;
}

std::vector<std::size_t> pk_sample_indices(std::span<const Sample> train, std::size_t p,
                                           std::size_t k, LabelKind kind, std::uint64_t seed,
                                           std::uint64_t step) {
  if (p == 0 || k == 0) throw DataError(DataErrorKind::kInvalidSpec, "P and K must be positive");
  const auto groups = group_by_label(train, kind);
  if (groups.size() < p) {
    throw DataError(DataErrorKind::kInsufficientClasses,
                    std::to_string(groups.size()) + " " + label_kind_name(kind) +
                        " classes available, P=" + std::to_string(p));
  }
  std::vector<const std::vector<std::size_t> *> eligible;
  int first_short = -1;
  for (const auto &[label, members] : groups) {
    if (members.size() >= k) eligible.push_back(&members);
    else if (first_short < 0) first_short = label;
  }
  if (eligible.size() < p) {
    throw DataError(DataErrorKind::kInsufficientSamples,
                    std::string(label_kind_name(kind)) + " class " + std::to_string(first_short) +
                        " has fewer than K=" + std::to_string(k) + " samples");
  }
  Rng rng(derive_seed(seed, kPkStream, step));
  // Partial Fisher-Yates over classes, then over members of each class.
  for (std::size_t i = 0; i < p; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.index(eligible.size() - i));
    std::swap(eligible[i], eligible[j]);
  }
  std::vector<std::size_t> batch;
  batch.reserve(p * k);
  for (std::size_t c = 0; c < p; ++c) {
    std::vector<std::size_t> members = *eligible[c];
    for (std::size_t i = 0; i < k; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng.index(members.size() - i));
      std::swap(members[i], members[j]);
      batch.push_back(members[i]);
    }
  }
  return batch;
}

std::vector<Sample> pk_sample(std::span<const Sample> train, std::size_t p, std::size_t k,
                              LabelKind kind, std::uint64_t seed, std::uint64_t step) {
  std::vector<Sample> out;
  for (std::size_t i : pk_sample_indices(train, p, k, kind, seed, step)) out.push_back(train[i]);
  return out;
}

}  // namespace molalign::data
