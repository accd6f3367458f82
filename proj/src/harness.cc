// Copyright 2026 The molalign Authors.
// SPDX-License-Identifier: Apache-2.0

#include "molalign/harness.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "molalign/metrics.h"

namespace molalign::harness {

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

template <typename T>
bool parse_uint(const std::string &s, T &out) {
  const char *end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end;
}

bool parse_double(const std::string &s, double &out) {
  if (s.empty()) return false;
  char *end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size();
}

bool parse_bool(const std::string &s, bool &out) {
  if (s == "true" || s == "1") return out = true, true;
  if (s == "false" || s == "0") return out = false, true;
  return false;
}

// Shortest text that parses back to the same double.
std::string fmt_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string hex_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

const char *ce_direction_name(loss::CeDirection d) {
  switch (d) {
    case loss::CeDirection::kBoth: return "both";
    case loss::CeDirection::kRows: return "rows";
    case loss::CeDirection::kColumns: return "columns";
  }
  return "both";
}

// ---------------------------------------------------------------------------
// Training state shared by run_stage, recompute_step_loss, and evaluation.

struct Batch {
  std::size_t p = 0;
  std::size_t k = 0;
};

// Per-sample inputs computed once: pooled frames and token ids.
struct Prepared {
  Tensor pooled;                       // [N, 2f]
  std::vector<std::vector<int>> ids;   // per sample
  std::vector<int> drug, moa;
};

Prepared prepare(std::span<const data::Sample> samples, const smiles::Vocabulary &vocab,
                 std::size_t max_len) {
  Prepared out;
  std::vector<Tensor> frames;
  frames.reserve(samples.size());
  std::map<std::string, std::vector<int>> cache;
  for (const auto &s : samples) {
    frames.push_back(s.frames);
    auto it = cache.find(s.smiles);
    if (it == cache.end()) it = cache.emplace(s.smiles, smiles::encode_tokens(s.smiles, vocab, max_len)).first;
    out.ids.push_back(it->second);
    out.drug.push_back(s.drug_label);
    out.moa.push_back(s.moa_label);
  }
  out.pooled = SequenceEncoder::pool(frames);
  return out;
}

Tensor gather(const Tensor &m, std::span<const std::size_t> rows) {
  Tensor out({rows.size(), m.cols()});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto src = m.row(rows[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

Batch fit_batch(const TrainConfig &c, std::span<const data::Sample> train, data::LabelKind kind) {
  Batch b{c.p, c.k};
  if (!c.fit_batch) return b;
  std::map<int, std::size_t> counts;
  for (const auto &s : train) ++counts[data::label_of(s, kind)];
  if (counts.empty()) return b;
  std::vector<std::size_t> sizes;
  for (const auto &[label, n] : counts) sizes.push_back(n);
  std::sort(sizes.rbegin(), sizes.rend());
  b.p = std::min(c.p, sizes.size());
  b.k = std::max<std::size_t>(1, std::min((c.p * c.k) / b.p, sizes[b.p - 1]));
  return b;
}

struct State {
  TrainConfig config;
  smiles::Vocabulary vocab;
  std::unique_ptr<Model> model;
  loss::CenterState centers;
  Velocity velocity;
  std::uint64_t step = 0;
};

smiles::Vocabulary vocabulary_for(const data::DatasetSplit &split) {
  std::set<std::string> distinct;
  for (const auto &s : split.train) distinct.insert(s.smiles);
  for (const auto &s : split.test) distinct.insert(s.smiles);
  const std::vector<std::string> corpus(distinct.begin(), distinct.end());
  return smiles::build_vocabulary(corpus);
}

std::size_t frame_dim_of(const data::DatasetSplit &split) {
  if (split.train.empty()) throw data::DataError(data::DataErrorKind::kEmptyInput, "empty training set");
  return split.train.front().frames.cols();
}

std::size_t classes_of(const data::DatasetSplit &split, data::LabelKind kind) {
  return std::max(data::class_count(split.train, kind), data::class_count(split.test, kind));
}

void apply_trainable_flags(State &st) {
  ParameterSet &ps = st.model->params();
  ps.set_trainable("mol.", !st.config.freeze_molecule() && st.config.alignment);
  ps.set_trainable("seq.", true);
  ps.set_trainable(SequenceEncoder::kInputPrefix, false);
  ps.set_trainable("head.", true);
}

void ensure_logit_scale(State &st, const Checkpoint *from) {
  if (!st.config.learn_temperature || st.model->params().contains(kLogitScaleName)) return;
  Tensor init = Tensor::scalar(std::log(1.0 / st.config.temperature));
  if (from) {
    for (const auto &p : from->params)
      if (p.name == kLogitScaleName) init = p.value;
  }
  st.model->params().add(kLogitScaleName, init);
}

State state_from_checkpoint(const Checkpoint &ckpt) {
  State st;
  st.config = ckpt.config;
  st.vocab = ckpt.vocab;
  st.model = restore_model(ckpt);
  st.centers = ckpt.centers;
  for (const auto &v : ckpt.velocity) st.velocity[v.name] = v.value;
  st.step = ckpt.step;
  return st;
}

Checkpoint checkpoint_from_state(const State &st) {
  Checkpoint c;
  c.config = st.config;
  c.model = st.model->config();
  c.vocab = st.vocab;
  for (const auto &p : st.model->params().all()) c.params.push_back({p.name, p.var.value(), p.trainable});
  for (const auto &[name, v] : st.velocity) c.velocity.push_back({name, v, true});
  c.centers = st.centers;
  c.step = st.step;
  return c;
}

struct StepOutput {
  loss::TotalLoss total;
  Var sequence;
  std::vector<int> labels;
};

StepOutput forward_step(const State &st, const Prepared &train, Batch batch,
                        std::span<const data::Sample> samples) {
  const TrainConfig &c = st.config;
  const data::LabelKind kind = c.label_kind();
  const auto idx = data::pk_sample_indices(samples, batch.p, batch.k, kind, c.seed, st.step);

  StepOutput out;
  std::vector<int> moa;
  for (std::size_t i : idx) {
    out.labels.push_back(kind == data::LabelKind::kDrug ? train.drug[i] : train.moa[i]);
    moa.push_back(train.moa[i]);
  }
  const Model &m = *st.model;
  out.sequence = m.sequence().forward_pooled(gather(train.pooled, idx));

  loss::LossComponents comps;
  if (c.alignment) {
    std::vector<std::vector<int>> ids;
    for (std::size_t i : idx) ids.push_back(train.ids[i]);
    Var mol = m.molecule().forward(ids);
    Var sv = c.learn_temperature
                 ? loss::similarity(mol, out.sequence, m.params().get(kLogitScaleName).var)
                 : loss::similarity(mol, out.sequence, c.temperature);
    const auto sup = loss::build_supervision(c.mclass_labels == MClassLabels::kMoa ? moa : out.labels);
    comps.msc = loss::msc_loss(sv, sup, c.ce_direction);
  }
  comps.triplet = loss::hard_triplet_loss(out.sequence, out.labels, c.weights.margin);
  comps.center = loss::center_loss(out.sequence, out.labels, st.centers);
  comps.cls = loss::classification_ce(m.head().forward(out.sequence), out.labels);
  out.total = loss::total_loss(comps, c.weights);
  return out;
}

struct EvalSet {
  Tensor test_pooled, query_pooled, gallery_pooled;
  std::vector<int> test_labels, query_labels, gallery_labels;
};

EvalSet make_eval_set(const data::DatasetSplit &split, data::LabelKind kind, std::uint64_t seed) {
  const data::DatasetSplit qg = data::with_query_kind(split, seed, kind);
  auto pool_of = [](std::span<const data::Sample> s) {
    std::vector<Tensor> frames;
    for (const auto &x : s) frames.push_back(x.frames);
    return SequenceEncoder::pool(frames);
  };
  EvalSet e;
  e.test_pooled = pool_of(qg.test);
  e.query_pooled = pool_of(qg.query);
  e.gallery_pooled = pool_of(qg.gallery);
  e.test_labels = data::labels_of(qg.test, kind);
  e.query_labels = data::labels_of(qg.query, kind);
  e.gallery_labels = data::labels_of(qg.gallery, kind);
  return e;
}

EvalRecord evaluate(const Model &m, const EvalSet &e) {
  EvalRecord r;
  const Tensor test_emb = m.sequence().forward_pooled(e.test_pooled).value();
  const Tensor logits = m.head().forward(Var::constant(test_emb)).value();
  r.accuracy = metrics::accuracy(logits, e.test_labels);
  const Tensor q = m.sequence().forward_pooled(e.query_pooled).value();
  const Tensor g = m.sequence().forward_pooled(e.gallery_pooled).value();
  const auto res = metrics::evaluate_retrieval(q, e.query_labels, g, e.gallery_labels);
  r.rank1 = res.rank1;
  r.rank5 = res.rank5;
  r.rank10 = res.rank10;
  r.map = res.map;
  r.cmc = res.cmc;
  return r;
}

void write_tensor(std::ostream &out, const Tensor &t) {
  out << t.rank();
  for (std::size_t d : t.shape()) out << ' ' << d;
  for (double v : t.data()) out << ' ' << hex_double(v);
}

Tensor read_tensor(std::istream &in) {
  std::size_t rank = 0;
  if (!(in >> rank) || rank > 8) throw CheckpointError("checkpoint: bad tensor rank");
  Shape shape(rank);
  for (auto &d : shape)
    if (!(in >> d)) throw CheckpointError("checkpoint: bad tensor shape");
  std::vector<double> values(shape_numel(shape));
  std::string tok;
  for (auto &v : values) {
    if (!(in >> tok) || !parse_double(tok, v)) throw CheckpointError("checkpoint: bad tensor value");
  }
  return Tensor(std::move(shape), std::move(values));
}

void expect(std::istream &in, const std::string &word) {
  std::string tok;
  if (!(in >> tok) || tok != word) {
    throw CheckpointError("checkpoint: expected '" + word + "', found '" + tok + "'");
  }
}

}  // namespace

const char *stage_name(Stage stage) {
  return stage == Stage::kPretrainDrug ? "pretrain_drug" : "finetune_moa";
}

const char *strategy_name(StrategyId id) {
  switch (id) {
    case StrategyId::kS1SeqOnly: return "S1";
    case StrategyId::kS2FreshSeq: return "S2";
    case StrategyId::kS3PretrainedSeq: return "S3";
  }
  return "S?";
}

StrategyId parse_strategy(const std::string &text) {
  if (text == "S1") return StrategyId::kS1SeqOnly;
  if (text == "S2") return StrategyId::kS2FreshSeq;
  if (text == "S3") return StrategyId::kS3PretrainedSeq;
  throw ConfigError("unknown strategy '" + text + "' (expected S1, S2, or S3)");
}

void TrainConfig::validate() const {
  auto fail = [](const std::string &m) { throw ConfigError("invalid config: " + m); };
  if (epochs < 1) fail("epochs must be >= 1");
  if (p < 1 || k < 1) fail("p and k must be >= 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) fail("learning_rate must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) fail("momentum must lie in [0, 1)");
  if (!(temperature > 0.0) || !std::isfinite(temperature)) fail("temperature must be positive");
  if (!(center_alpha > 0.0 && center_alpha <= 1.0)) fail("center_alpha must lie in (0, 1]");
  for (double w : {weights.w_msc, weights.w_triplet, weights.w_center, weights.w_cls, weights.margin}) {
    if (!(w >= 0.0) || !std::isfinite(w)) fail("loss weights and margin must be finite and >= 0");
  }
  if (embed_dim < 1 || hidden_dim < 1 || token_dim < 1 || max_len < 1) fail("dimensions must be >= 1");
  if (!(split_ratio > 0.0 && split_ratio < 1.0)) fail("split_ratio must lie in (0, 1)");
}

TrainConfig parse_config(const std::string &text, TrainConfig c) {
  std::istringstream in(text);
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = "config line " + std::to_string(line_no);
    if (eq == std::string::npos) throw ConfigError(where + ": expected key=value");
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    auto bad = [&] { throw ConfigError(where + ": bad value '" + val + "' for " + key); };
    auto size = [&](std::size_t &dst) { if (!parse_uint(val, dst)) bad(); };
    auto real = [&](double &dst) { if (!parse_double(val, dst)) bad(); };
    auto flag = [&](bool &dst) { if (!parse_bool(val, dst)) bad(); };

    if (key == "epochs") size(c.epochs);
    else if (key == "p") size(c.p);
    else if (key == "k") size(c.k);
    else if (key == "fit_batch") flag(c.fit_batch);
    else if (key == "learning_rate") real(c.learning_rate);
    else if (key == "momentum") real(c.momentum);
    else if (key == "w_msc") real(c.weights.w_msc);
    else if (key == "w_triplet") real(c.weights.w_triplet);
    else if (key == "w_center") real(c.weights.w_center);
    else if (key == "w_cls") real(c.weights.w_cls);
    else if (key == "margin") real(c.weights.margin);
    else if (key == "temperature") real(c.temperature);
    else if (key == "learn_temperature") flag(c.learn_temperature);
    else if (key == "center_alpha") real(c.center_alpha);
    else if (key == "embed_dim") size(c.embed_dim);
    else if (key == "hidden_dim") size(c.hidden_dim);
    else if (key == "token_dim") size(c.token_dim);
    else if (key == "max_len") size(c.max_len);
    else if (key == "seed") { if (!parse_uint(val, c.seed)) bad(); }
    else if (key == "stage") {
      if (val == "pretrain_drug") c.stage = Stage::kPretrainDrug;
      else if (val == "finetune_moa") c.stage = Stage::kFinetuneMoa;
      else bad();
    } else if (key == "freeze_molecule_encoder") {
      if (val == "auto") c.freeze_molecule_encoder.reset();
      else {
        bool b = false;
        flag(b);
        c.freeze_molecule_encoder = b;
      }
    } else if (key == "alignment") flag(c.alignment);
    else if (key == "eval_every") size(c.eval_every);
    else if (key == "mclass_labels") {
      if (val == "stage") c.mclass_labels = MClassLabels::kStage;
      else if (val == "moa") c.mclass_labels = MClassLabels::kMoa;
      else bad();
    } else if (key == "ce_direction") {
      if (val == "both") c.ce_direction = loss::CeDirection::kBoth;
      else if (val == "rows") c.ce_direction = loss::CeDirection::kRows;
      else if (val == "columns") c.ce_direction = loss::CeDirection::kColumns;
      else bad();
    } else if (key == "split_ratio") real(c.split_ratio);
    else if (key == "split_by") {
      if (val == "sample") c.split_by = data::SplitBy::kSample;
      else if (val == "drug") c.split_by = data::SplitBy::kDrug;
      else bad();
    }
    else if (key == "pretrain_epochs") size(c.pretrain_epochs);
    else if (key == "finetune_epochs") size(c.finetune_epochs);
    else throw ConfigError(where + ": unknown key '" + key + "'");
  }
  c.validate();
  return c;
}

TrainConfig load_config(const std::filesystem::path &path, TrainConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), std::move(base));
}

std::string serialize_config(const TrainConfig &c) {
  std::ostringstream o;
  o << "epochs=" << c.epochs << '\n'
    << "p=" << c.p << '\n'
    << "k=" << c.k << '\n'
    << "fit_batch=" << (c.fit_batch ? "true" : "false") << '\n'
    << "learning_rate=" << hex_double(c.learning_rate) << '\n'
    << "momentum=" << hex_double(c.momentum) << '\n'
    << "w_msc=" << hex_double(c.weights.w_msc) << '\n'
    << "w_triplet=" << hex_double(c.weights.w_triplet) << '\n'
    << "w_center=" << hex_double(c.weights.w_center) << '\n'
    << "w_cls=" << hex_double(c.weights.w_cls) << '\n'
    << "margin=" << hex_double(c.weights.margin) << '\n'
    << "temperature=" << hex_double(c.temperature) << '\n'
    << "learn_temperature=" << (c.learn_temperature ? "true" : "false") << '\n'
    << "center_alpha=" << hex_double(c.center_alpha) << '\n'
    << "embed_dim=" << c.embed_dim << '\n'
    << "hidden_dim=" << c.hidden_dim << '\n'
    << "token_dim=" << c.token_dim << '\n'
    << "max_len=" << c.max_len << '\n'
    << "seed=" << c.seed << '\n'
    << "stage=" << stage_name(c.stage) << '\n'
    << "freeze_molecule_encoder="
    << (c.freeze_molecule_encoder ? (*c.freeze_molecule_encoder ? "true" : "false") : "auto") << '\n'
    << "alignment=" << (c.alignment ? "true" : "false") << '\n'
    << "eval_every=" << c.eval_every << '\n'
    << "mclass_labels=" << (c.mclass_labels == MClassLabels::kMoa ? "moa" : "stage") << '\n'
    << "ce_direction=" << ce_direction_name(c.ce_direction) << '\n'
    << "split_ratio=" << hex_double(c.split_ratio) << '\n'
    << "split_by=" << (c.split_by == data::SplitBy::kDrug ? "drug" : "sample") << '\n'
    << "pretrain_epochs=" << c.pretrain_epochs << '\n'
    << "finetune_epochs=" << c.finetune_epochs << '\n';
  return o.str();
}

void sgd_step(ParameterSet &params, std::span<const Tensor> grads, Velocity &velocity, double lr,
              double momentum) {
  auto &all = params.all();
  if (grads.size() != all.size()) {
    throw TensorError(TensorErrorKind::kShapeMismatch, "sgd_step",
                      std::to_string(grads.size()) + " gradients for " + std::to_string(all.size()) +
                          " parameters");
  }
  for (std::size_t i = 0; i < all.size(); ++i) {
    const Parameter &p = all[i];
    if (!p.trainable) continue;
    if (!grads[i].same_shape(p.var.value())) {
      throw TensorError(TensorErrorKind::kShapeMismatch, "sgd_step",
                        p.name + ": gradient " + shape_string(grads[i].shape()) + " vs parameter " +
                            shape_string(p.var.shape()));
    }
    auto [it, fresh] = velocity.try_emplace(p.name, Tensor::zeros_like(p.var.value()));
    Tensor &v = it->second;
    Tensor value = p.var.value();
    auto vd = v.data();
    auto gd = grads[i].data();
    auto pd = value.data();
    for (std::size_t j = 0; j < pd.size(); ++j) {
      vd[j] = momentum * vd[j] + gd[j];
      pd[j] -= lr * vd[j];
    }
    Var handle = p.var;
    handle.set_value(std::move(value));
  }
}

void sgd_step(ParameterSet &params, Velocity &velocity, double lr, double momentum) {
  std::vector<Tensor> grads;
  grads.reserve(params.size());
  for (const auto &p : params.all()) grads.push_back(p.var.grad());
  sgd_step(params, grads, velocity, lr, momentum);
}

std::string checkpoint_to_string(const Checkpoint &c) {
  std::ostringstream o;
  o << kCheckpointTag << '\n';
  const std::string cfg = serialize_config(c.config);
  o << "config " << std::count(cfg.begin(), cfg.end(), '\n') << '\n' << cfg;
  const ModelConfig &m = c.model;
  o << "model " << m.vocab_size << ' ' << m.frame_dim << ' ' << m.token_dim << ' ' << m.hidden_dim
    << ' ' << m.embed_dim << ' ' << m.num_classes << ' ' << m.seed << '\n';
  const auto tokens = c.vocab.tokens();
  o << "vocab " << tokens.size() << '\n';
  for (const auto &t : tokens) o << t << '\n';
  for (const auto &p : c.params) {
    o << "param " << p.name << ' ' << (p.trainable ? 1 : 0) << ' ';
    write_tensor(o, p.value);
    o << '\n';
  }
  for (const auto &v : c.velocity) {
    o << "velocity " << v.name << ' ';
    write_tensor(o, v.value);
    o << '\n';
  }
  o << "centers " << hex_double(c.centers.alpha) << ' ';
  write_tensor(o, c.centers.centers);
  o << '\n' << "step " << c.step << '\n' << "end\n";
  return o.str();
}

Checkpoint checkpoint_from_string(const std::string &text) {
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  if (trim(line) != kCheckpointTag) {
    throw CheckpointError("checkpoint: format tag '" + trim(line) + "' does not match '" +
                          kCheckpointTag + "'");
  }
  Checkpoint c;
  std::size_t n = 0;
  expect(in, "config");
  if (!(in >> n)) throw CheckpointError("checkpoint: bad config count");
  std::getline(in, line);
  std::string cfg;
  for (std::size_t i = 0; i < n && std::getline(in, line); ++i) cfg += line + '\n';
  try {
    c.config = parse_config(cfg);
  } catch (const ConfigError &e) {
    throw CheckpointError(std::string("checkpoint: ") + e.what());
  }
  expect(in, "model");
  ModelConfig &m = c.model;
  if (!(in >> m.vocab_size >> m.frame_dim >> m.token_dim >> m.hidden_dim >> m.embed_dim >>
        m.num_classes >> m.seed)) {
    throw CheckpointError("checkpoint: bad model line");
  }
  expect(in, "vocab");
  if (!(in >> n)) throw CheckpointError("checkpoint: bad vocab count");
  std::vector<std::string> tokens(n);
  for (auto &t : tokens)
    if (!(in >> t)) throw CheckpointError("checkpoint: truncated vocabulary");
  c.vocab = smiles::Vocabulary(tokens);

  std::string tag;
  bool have_centers = false, have_step = false;
  while (in >> tag) {
    if (tag == "param") {
      NamedTensor p;
      int trainable = 0;
      if (!(in >> p.name >> trainable)) throw CheckpointError("checkpoint: bad param header");
      p.trainable = trainable != 0;
      p.value = read_tensor(in);
      c.params.push_back(std::move(p));
    } else if (tag == "velocity") {
      NamedTensor v;
      if (!(in >> v.name)) throw CheckpointError("checkpoint: bad velocity header");
      v.value = read_tensor(in);
      c.velocity.push_back(std::move(v));
    } else if (tag == "centers") {
      std::string alpha;
      if (!(in >> alpha) || !parse_double(alpha, c.centers.alpha)) {
        throw CheckpointError("checkpoint: bad center alpha");
      }
      c.centers.centers = read_tensor(in);
      have_centers = true;
    } else if (tag == "step") {
      if (!(in >> c.step)) throw CheckpointError("checkpoint: bad step");
      have_step = true;
    } else if (tag == "end") {
      if (!have_centers || !have_step) throw CheckpointError("checkpoint: missing centers or step");
      return c;
    } else {
      throw CheckpointError("checkpoint: unexpected section '" + tag + "'");
    }
  }
  throw CheckpointError("checkpoint: missing end marker");
}

void save_checkpoint(const std::filesystem::path &path, const Checkpoint &ckpt) {
  std::ofstream out(path);
  if (!out) throw CheckpointError("cannot write checkpoint " + path.string());
  out << checkpoint_to_string(ckpt);
  if (!out) throw CheckpointError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return checkpoint_from_string(ss.str());
}

std::unique_ptr<Model> restore_model(const Checkpoint &ckpt) {
  auto model = std::make_unique<Model>(ckpt.model);
  ParameterSet &ps = model->params();
  for (const auto &p : ckpt.params) {
    if (!ps.contains(p.name)) {
      if (p.name != kLogitScaleName) throw CheckpointError("checkpoint: unknown parameter " + p.name);
      ps.add(p.name, p.value, p.trainable);
      continue;
    }
    Parameter &dst = ps.get(p.name);
    if (!dst.var.value().same_shape(p.value)) {
      throw CheckpointError("checkpoint: " + p.name + " has shape " + shape_string(p.value.shape()) +
                            ", model expects " + shape_string(dst.var.shape()));
    }
    dst.var.set_value(p.value);
    dst.trainable = p.trainable;
  }
  return model;
}

StageResult run_stage(const TrainConfig &config, const data::DatasetSplit &split,
                      const Checkpoint *init, const RunOptions &options) {
  config.validate();
  const data::LabelKind kind = config.label_kind();

  State st;
  st.config = config;
  st.vocab = init ? init->vocab : vocabulary_for(split);
  ModelConfig mc;
  mc.vocab_size = st.vocab.size();
  mc.frame_dim = frame_dim_of(split);
  mc.token_dim = config.token_dim;
  mc.hidden_dim = config.hidden_dim;
  mc.embed_dim = config.embed_dim;
  mc.num_classes = classes_of(split, kind);
  mc.seed = config.seed;
  st.model = std::make_unique<Model>(mc);
  if (init) {
    ParameterSet &ps = st.model->params();
    for (const auto &p : init->params) {
      if (p.name.rfind(options.init_prefix, 0) != 0 || !ps.contains(p.name)) continue;
      Parameter &dst = ps.get(p.name);
      if (dst.var.value().same_shape(p.value)) dst.var.set_value(p.value);
    }
  }
  const Prepared train = prepare(split.train, st.vocab, config.max_len);
  fit_input_normalization(*st.model, train.pooled);
  ensure_logit_scale(st, init);
  apply_trainable_flags(st);

  st.centers = loss::CenterState(mc.num_classes, mc.embed_dim, config.center_alpha);
  if (init && init->config.label_kind() == kind &&
      init->centers.centers.same_shape(st.centers.centers)) {
    st.centers.centers = init->centers.centers;
  }

  const EvalSet eval_set = make_eval_set(split, kind, config.seed);
  const Batch batch = fit_batch(config, split.train, kind);
  const std::size_t per_batch = batch.p * batch.k;
  const std::size_t steps_per_epoch = (split.train.size() + per_batch - 1) / per_batch;
  const std::set<std::uint64_t> snap(options.snapshot_steps.begin(), options.snapshot_steps.end());

  StageResult result;
  result.batch_p = batch.p;
  result.batch_k = batch.k;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    for (std::size_t s = 0; s < steps_per_epoch; ++s) {
      if (snap.count(st.step)) result.snapshots.emplace(st.step, checkpoint_from_state(st));
      StepOutput out = forward_step(st, train, batch, split.train);
      st.model->params().zero_grad();
      backward(out.total.value);
      sgd_step(st.model->params(), st.velocity, config.learning_rate, config.momentum);
      loss::update_centers(st.centers, out.sequence.value(), out.labels);
      result.losses.push_back({st.step, out.total.report});
      ++st.step;
    }
    const bool due = config.eval_every > 0 && epoch % config.eval_every == 0;
    if (due || epoch == config.epochs) {
      EvalRecord r = evaluate(*st.model, eval_set);
      r.epoch = epoch;
      r.step = st.step;
      result.history.push_back(std::move(r));
    }
  }
  if (snap.count(st.step)) result.snapshots.emplace(st.step, checkpoint_from_state(st));
  result.checkpoint = checkpoint_from_state(st);
  return result;
}

loss::LossReport recompute_step_loss(const Checkpoint &ckpt, const data::DatasetSplit &split) {
  const State st = state_from_checkpoint(ckpt);
  const Prepared train = prepare(split.train, st.vocab, st.config.max_len);
  const Batch batch = fit_batch(st.config, split.train, st.config.label_kind());
  return forward_step(st, train, batch, split.train).total.report;
}

EvalRecord evaluate_checkpoint(const Checkpoint &ckpt, const data::DatasetSplit &split) {
  const auto model = restore_model(ckpt);
  EvalRecord r = evaluate(*model, make_eval_set(split, ckpt.config.label_kind(), ckpt.config.seed));
  r.step = ckpt.step;
  return r;
}

bool StrategyReport::has_alignment_history() const {
  return std::any_of(stage.losses.begin(), stage.losses.end(),
                     [](const StepLog &l) { return l.report.msc.has_value(); });
}

StrategyReport run_strategy(StrategyId id, const TrainConfig &base, const data::DatasetSplit &split) {
  TrainConfig c = base;
  c.stage = Stage::kPretrainDrug;
  if (base.pretrain_epochs > 0) c.epochs = base.pretrain_epochs;

  TrainConfig seq_only = c;
  seq_only.alignment = false;
  seq_only.freeze_molecule_encoder = true;

  TrainConfig full = c;
  full.alignment = true;
  full.freeze_molecule_encoder = false;

  StrategyReport report;
  report.id = id;
  switch (id) {
    case StrategyId::kS1SeqOnly:
      report.stage = run_stage(seq_only, split);
      break;
    case StrategyId::kS2FreshSeq:
      report.stage = run_stage(full, split);
      break;
    case StrategyId::kS3PretrainedSeq: {
      report.seq_pretrain = run_stage(seq_only, split);
      RunOptions opts;
      opts.init_prefix = SequenceEncoder::kPrefix;
      report.stage = run_stage(full, split, &report.seq_pretrain->checkpoint, opts);
      break;
    }
  }
  report.drug = report.stage.final_metrics();
  return report;
}

PipelineResult run_pipeline(const TrainConfig &base, const data::DatasetSplit &split,
                            StrategyId strategy) {
  PipelineResult out;
  out.pretrain = run_strategy(strategy, base, split);
  TrainConfig c = base;
  c.stage = Stage::kFinetuneMoa;
  c.freeze_molecule_encoder.reset();
  c.alignment = strategy != StrategyId::kS1SeqOnly;
  if (base.finetune_epochs > 0) c.epochs = base.finetune_epochs;
  out.finetune = run_stage(c, split, &out.pretrain.stage.checkpoint);
  return out;
}

std::vector<double> default_sweep_weights() {
  return {0.01, 0.02, 0.04, 0.06, 0.08, 0.1, 0.3, 0.5, 0.7, 0.9};
}

std::vector<SweepRow> sweep_center_weight(const TrainConfig &base, std::span<const double> weights,
                                          const data::DatasetSplit &split, StrategyId strategy) {
  if (weights.empty()) throw ConfigError("sweep: weight list is empty");
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("sweep: weights must be finite and >= 0");
  }
  std::vector<SweepRow> rows;
  for (double w : weights) {
    TrainConfig c = base;
    c.weights.w_center = w;
    const PipelineResult r = run_pipeline(c, split, strategy);
    const EvalRecord &m = r.finetune.final_metrics();
    rows.push_back({w, m.rank1, m.map, m.accuracy});
  }
  return rows;
}

std::string loss_log_csv(std::span<const StepLog> log) {
  std::ostringstream o;
  o << "step,msc,triplet,center,cls,total\n";
  auto opt = [](const std::optional<double> &v) { return v ? fmt_double(*v) : std::string(); };
  for (const auto &l : log) {
    o << l.step << ',' << opt(l.report.msc) << ',' << opt(l.report.triplet) << ','
      << opt(l.report.center) << ',' << opt(l.report.cls) << ',' << fmt_double(l.report.total) << '\n';
  }
  return o.str();
}

std::string history_csv(std::span<const EvalRecord> history) {
  std::ostringstream o;
  o << "epoch,step,accuracy,rank1,rank5,rank10,map\n";
  for (const auto &r : history) {
    o << r.epoch << ',' << r.step << ',' << fmt_double(r.accuracy) << ',' << fmt_double(r.rank1) << ','
      << fmt_double(r.rank5) << ',' << fmt_double(r.rank10) << ',' << fmt_double(r.map) << '\n';
  }
  return o.str();
}

std::string sweep_csv(std::span<const SweepRow> rows) {
  std::ostringstream o;
  o << "weight,rank1,map,accuracy\n";
  for (const auto &r : rows) {
    o << fmt_double(r.weight) << ',' << fmt_double(r.rank1) << ',' << fmt_double(r.map) << ','
      << fmt_double(r.accuracy) << '\n';
  }
  return o.str();
}

}  // namespace molalign::harness
