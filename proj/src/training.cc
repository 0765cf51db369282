/*
 * Copyright 2026 The mpd Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "mpd/training.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <exception>
#include <limits>
#include <numeric>

#include "mpd/error.h"
#include "mpd/evaluation.h"

namespace mpd {

using nlohmann::json;

// ---------------------------------------------------------------------------
// TrainConfig

namespace {

double ParseDouble(std::string_view key, std::string_view text) {
  double v = 0.0;
  auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || end != text.data() + text.size() || !std::isfinite(v)) {
    throw ConfigError("config key '" + std::string(key) + "': '" + std::string(text) +
                      "' is not a number");
  }
  return v;
}

std::uint64_t ParseUnsigned(std::string_view key, std::string_view text) {
  std::uint64_t v = 0;
  auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || end != text.data() + text.size()) {
    throw ConfigError("config key '" + std::string(key) + "': '" + std::string(text) +
                      "' is not a non-negative integer");
  }
  return v;
}

WsdKind ParseWsdKind(std::string_view s) {
  if (s == "baseline") return WsdKind::kBaseline;
  if (s == "ewiser") return WsdKind::kEwiser;
  throw ConfigError("unknown WSD kind '" + std::string(s) + "'");
}

std::string_view WsdKindName(WsdKind k) { return k == WsdKind::kBaseline ? "baseline" : "ewiser"; }

}  // namespace

void TrainConfig::Validate() const {
  auto fail = [](const std::string& what) { throw ConfigError("invalid config: " + what); };
  if (!(alpha >= 0.0 && alpha <= 1.0)) fail("alpha must lie in [0, 1]");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must lie in [0, 1)");
  if (!(lr_divisor >= 1.0)) fail("lr_divisor must be at least 1");
  if (!(learning_rate > 0.0)) fail("lr must be positive");
  if (batch_size == 0) fail("batch_size must be positive");
  if (check_interval == 0) fail("check_interval must be positive");
  if (patience == 0) fail("patience must be positive");
  for (const ArchConfig* a : {&phi, &theta}) {
    if (a->layers == 0) fail("layer counts must be positive");
    if (a->layers > 1 && a->hidden == 0) fail("hidden sizes must be positive");
  }
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    fail("adam betas must lie in [0, 1)");
  }
  if (!(eps > 0.0)) fail("eps must be positive");
  if (!(weight_decay >= 0.0)) fail("weight_decay must be non-negative");
  if (model == ModelKind::kMpd) {
    fail("model 'mpd' has no direct training signal; train 'combined' instead");
  }
}

const std::vector<std::string>& TrainConfig::Keys() {
  static const std::vector<std::string> keys = {
      "model",      "wsd",        "alpha",      "dropout",    "n_phi",
      "h_phi",      "n_theta",    "h_theta",    "lr",         "lr_divisor",
      "batch_size", "check_interval", "patience", "seed",     "max_steps",
      "beta1",      "beta2",      "eps",        "weight_decay"};
  return keys;
}

void TrainConfig::Set(std::string_view key, std::string_view value) {
  auto size = [&] { return static_cast<std::size_t>(ParseUnsigned(key, value)); };
  if (key == "model") {
    model = ParseModelKind(value);
  } else if (key == "wsd") {
    wsd = ParseWsdKind(value);
  } else if (key == "alpha") {
    alpha = ParseDouble(key, value);
  } else if (key == "dropout") {
    dropout = ParseDouble(key, value);
  } else if (key == "n_phi") {
    phi.layers = size();
  } else if (key == "h_phi") {
    phi.hidden = size();
  } else if (key == "n_theta") {
    theta.layers = size();
  } else if (key == "h_theta") {
    theta.hidden = size();
  } else if (key == "lr") {
    learning_rate = ParseDouble(key, value);
  } else if (key == "lr_divisor") {
    lr_divisor = ParseDouble(key, value);
  } else if (key == "batch_size") {
    batch_size = size();
  } else if (key == "check_interval") {
    check_interval = size();
  } else if (key == "patience") {
    patience = size();
  } else if (key == "seed") {
    seed = ParseUnsigned(key, value);
  } else if (key == "max_steps") {
    max_steps = size();
  } else if (key == "beta1") {
    beta1 = ParseDouble(key, value);
  } else if (key == "beta2") {
    beta2 = ParseDouble(key, value);
  } else if (key == "eps") {
    eps = ParseDouble(key, value);
  } else if (key == "weight_decay") {
    weight_decay = ParseDouble(key, value);
  } else {
    throw ConfigError("unknown config key '" + std::string(key) + "'");
  }
}

ModelSpec TrainConfig::Spec(std::size_t k) const {
  ModelSpec s;
  s.kind = model;
  s.wsd = wsd;
  s.k = k;
  s.theta = theta;
  s.phi = phi;
  s.dropout = dropout;
  return s;
}

AdamWOptions TrainConfig::Optimizer() const {
  return AdamWOptions{learning_rate, beta1, beta2, eps, weight_decay};
}

json TrainConfig::ToJson() const {
  return {{"model", ModelKindName(model)},
          {"wsd", WsdKindName(wsd)},
          {"alpha", alpha},
          {"dropout", dropout},
          {"n_phi", phi.layers},
          {"h_phi", phi.hidden},
          {"n_theta", theta.layers},
          {"h_theta", theta.hidden},
          {"lr", learning_rate},
          {"lr_divisor", lr_divisor},
          {"batch_size", batch_size},
          {"check_interval", check_interval},
          {"patience", patience},
          {"seed", seed},
          {"max_steps", max_steps},
          {"beta1", beta1},
          {"beta2", beta2},
          {"eps", eps},
          {"weight_decay", weight_decay}};
}

TrainConfig TrainConfig::FromJson(const json& j) {
  TrainConfig c;
  try {
    c.model = ParseModelKind(j.at("model").get<std::string>());
    c.wsd = ParseWsdKind(j.at("wsd").get<std::string>());
    c.alpha = j.at("alpha").get<double>();
    c.dropout = j.at("dropout").get<double>();
    c.phi = {j.at("n_phi").get<std::size_t>(), j.at("h_phi").get<std::size_t>()};
    c.theta = {j.at("n_theta").get<std::size_t>(), j.at("h_theta").get<std::size_t>()};
    c.learning_rate = j.at("lr").get<double>();
    c.lr_divisor = j.at("lr_divisor").get<double>();
    c.batch_size = j.at("batch_size").get<std::size_t>();
    c.check_interval = j.at("check_interval").get<std::size_t>();
    c.patience = j.at("patience").get<std::size_t>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.max_steps = j.at("max_steps").get<std::size_t>();
    c.beta1 = j.at("beta1").get<double>();
    c.beta2 = j.at("beta2").get<double>();
    c.eps = j.at("eps").get<double>();
    c.weight_decay = j.at("weight_decay").get<double>();
  } catch (const json::exception& e) {
    throw DataError(std::string("invalid train config: ") + e.what());
  }
  return c;
}

// ---------------------------------------------------------------------------
// Prepared data. Embedding lookups happen once; batches are row gathers.

namespace {

constexpr std::size_t kEvalChunk = 1024;
constexpr double kImprovementTolerance = 1e-9;

class Skipper {
 public:
  Skipper(std::map<std::string, std::size_t>* counts, std::string split)
      : counts_(counts), split_(std::move(split)) {}

  // Strict mode (no counts) throws instead of counting.
  void operator()(const std::string& reason, const Token& token) const {
    if (counts_ == nullptr) throw DataError("token '" + TokenKey(token) + "': " + reason);
    ++(*counts_)[split_ + ": " + reason];
  }

 private:
  std::map<std::string, std::size_t>* counts_;
  std::string split_;
};

void Append(std::vector<double>& buf, std::span<const float> raw) {
  buf.insert(buf.end(), raw.begin(), raw.end());
}

Matrix Rows(const Matrix& m, std::span<const std::size_t> idx) {
  Matrix out(idx.size(), m.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    auto src = m.row(idx[r]);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return out;
}

// MPD inputs and WSD columns of the candidate senses seen by a combined model.
struct SenseTable {
  std::map<Sense, std::size_t> index;
  std::vector<double> buffer;
  std::vector<std::size_t> column;
  Matrix inputs;

  std::size_t Add(const Sense& s, const EmbeddingStore& store, const WsdModel& wsd,
                  const Lexicon& lexicon) {
    if (auto it = index.find(s); it != index.end()) return it->second;
    const std::size_t row = column.size();
    index.emplace(s, row);
    Append(buffer, store.Raw(Namespace::kType, s.wordform));
    Append(buffer, store.Raw(Namespace::kSynset, s.definition_id));
    column.push_back(*wsd.Column(lexicon, s));
    return row;
  }

  void Finish(std::size_t k) { inputs = Matrix(column.size(), 2 * k, std::move(buffer)); }
};

struct PreparedSmd {
  Matrix tokens, sents, types;
  std::vector<int> labels;
  std::vector<std::vector<std::size_t>> senses;  // SenseTable rows, combined only

  std::size_t size() const { return labels.size(); }
};

struct PreparedWsd {
  Matrix tokens;
  Tape::Candidates columns;
  std::vector<std::size_t> gold;  // column of the gold sense

  std::size_t size() const { return gold.size(); }
};

bool IsCombined(const ModelBundle& b) { return b.mpd.has_value() && b.wsd.has_value(); }

PreparedSmd PrepareSmd(std::span<const SmdExample> examples, const ModelBundle& b,
                       const EmbeddingStore& store, const Lexicon& lexicon, SenseTable* table,
                       const Skipper& skip) {
  const std::size_t k = store.dimension();
  const bool melbert = b.smd && b.smd->kind == SmdKind::kMelbert;
  std::vector<double> tok, sent, type;
  PreparedSmd out;
  for (const SmdExample& ex : examples) {
    const std::string key = TokenKey(ex.token);
    if (!store.Contains(Namespace::kToken, key)) {
      skip("missing TOKEN embedding", ex.token);
      continue;
    }
    std::vector<std::size_t> rows;
    if (IsCombined(b)) {
      if (!lexicon.Contains(ex.token.wordform())) {
        skip("wordform not in lexicon", ex.token);
        continue;
      }
      const std::vector<Sense> candidates = UsableCandidates(lexicon, store, ex.token);
      if (candidates.empty()) {
        skip("no candidate sense with TYPE and SYNSET embeddings", ex.token);
        continue;
      }
      for (const Sense& s : candidates) rows.push_back(table->Add(s, store, *b.wsd, lexicon));
    }
    if (melbert) {
      if (!store.Contains(Namespace::kSent, SentKey(ex.token))) {
        skip("missing SENT embedding", ex.token);
        continue;
      }
      if (!store.Contains(Namespace::kType, ex.token.wordform())) {
        skip("missing TYPE embedding", ex.token);
        continue;
      }
      Append(sent, store.Raw(Namespace::kSent, SentKey(ex.token)));
      Append(type, store.Raw(Namespace::kType, ex.token.wordform()));
    }
    Append(tok, store.Raw(Namespace::kToken, key));
    out.labels.push_back(ex.label);
    out.senses.push_back(std::move(rows));
  }
  const std::size_t n = out.size();
  out.tokens = Matrix(n, k, std::move(tok));
  if (melbert) {
    out.sents = Matrix(n, k, std::move(sent));
    out.types = Matrix(n, k, std::move(type));
  }
  return out;
}

PreparedWsd PrepareWsd(std::span<const WsdExample> examples, const WsdModel& wsd,
                       const EmbeddingStore& store, const Lexicon& lexicon, const Skipper& skip) {
  std::vector<double> tok;
  PreparedWsd out;
  for (const WsdExample& ex : examples) {
    const std::string key = TokenKey(ex.token);
    if (!store.Contains(Namespace::kToken, key)) {
      skip("missing TOKEN embedding", ex.token);
      continue;
    }
    const std::vector<Sense> candidates = CandidateSenses(lexicon, ex.token.wordform());
    if (candidates.empty()) {
      skip("wordform not in lexicon", ex.token);
      continue;
    }
    if (std::find(candidates.begin(), candidates.end(), ex.gold) == candidates.end()) {
      skip("gold sense not among candidates", ex.token);
      continue;
    }
    std::vector<std::size_t> cols;
    for (const Sense& s : candidates) cols.push_back(*wsd.Column(lexicon, s));
    Append(tok, store.Raw(Namespace::kToken, key));
    out.columns.push_back(std::move(cols));
    out.gold.push_back(*wsd.Column(lexicon, ex.gold));
  }
  out.tokens = Matrix(out.size(), store.dimension(), std::move(tok));
  return out;
}

// B x 1 token metaphoricity for the rows idx of d.
Tape::Var SmdBatch(Tape& tape, const ModelBundle& b, const PreparedSmd& d, const SenseTable* table,
                   std::span<const std::size_t> idx, ForwardOptions opts, bool train_phi) {
  Tape::Var tok = tape.Input(Rows(d.tokens, idx));
  if (IsCombined(b)) {
    CombinedLayout layout;
    std::vector<std::size_t> rows;
    for (std::size_t r = 0; r < idx.size(); ++r) {
      std::vector<std::size_t> cols;
      for (std::size_t s : d.senses[idx[r]]) {
        const std::size_t col = table->column[s];
        cols.push_back(col);
        layout.gather.emplace_back(r, col);
        layout.segment.push_back(r);
        rows.push_back(s);
      }
      layout.columns.push_back(std::move(cols));
    }
    Tape::Var in = tape.Input(Rows(table->inputs, rows));
    return CombinedForward(tape, *b.mpd, *b.wsd, in, tok, layout, opts, true, train_phi);
  }
  Tape::Var sent = tok, type = tok;
  if (b.smd->kind == SmdKind::kMelbert) {
    sent = tape.Input(Rows(d.sents, idx));
    type = tape.Input(Rows(d.types, idx));
  }
  return SmdForward(tape, *b.smd, tok, sent, type, opts);
}

Tape::Var WsdBatch(Tape& tape, const WsdModel& wsd, const PreparedWsd& d,
                   std::span<const std::size_t> idx, ForwardOptions opts, bool trainable,
                   std::vector<std::size_t>& gold) {
  Tape::Candidates cols;
  gold.clear();
  for (std::size_t i : idx) {
    cols.push_back(d.columns[i]);
    gold.push_back(d.gold[i]);
  }
  Tape::Var tok = tape.Input(Rows(d.tokens, idx));
  return WsdForward(tape, wsd, tok, cols, opts, trainable);
}

template <class F>
void ForChunks(std::size_t n, F&& f) {
  std::vector<std::size_t> idx;
  for (std::size_t begin = 0; begin < n; begin += kEvalChunk) {
    const std::size_t end = std::min(n, begin + kEvalChunk);
    idx.resize(end - begin);
    std::iota(idx.begin(), idx.end(), begin);
    f(std::span<const std::size_t>(idx));
  }
}

double SmdLossFull(const ModelBundle& b, const PreparedSmd& d, const SenseTable* table,
                   kernels::Exec exec) {
  double total = 0.0;
  ForChunks(d.size(), [&](std::span<const std::size_t> idx) {
    Tape tape(exec);
    Tape::Var p = SmdBatch(tape, b, d, table, idx, {}, true);
    std::span<const int> labels(d.labels.data() + idx.front(), idx.size());
    total += tape.value(tape.BinaryCrossEntropy(p, labels))[0] * static_cast<double>(idx.size());
  });
  return total / static_cast<double>(d.size());
}

double WsdLossFull(const WsdModel& wsd, const PreparedWsd& d, kernels::Exec exec) {
  double total = 0.0;
  std::vector<std::size_t> gold;
  ForChunks(d.size(), [&](std::span<const std::size_t> idx) {
    Tape tape(exec);
    Tape::Var dist = WsdBatch(tape, wsd, d, idx, {}, true, gold);
    total += tape.value(tape.CategoricalNll(dist, gold))[0] * static_cast<double>(idx.size());
  });
  return total / static_cast<double>(d.size());
}

std::vector<double> SmdPredictions(const ModelBundle& b, const PreparedSmd& d,
                                   const SenseTable* table, kernels::Exec exec) {
  std::vector<double> out;
  ForChunks(d.size(), [&](std::span<const std::size_t> idx) {
    Tape tape(exec);
    const Matrix& p = tape.value(SmdBatch(tape, b, d, table, idx, {}, true));
    for (double v : p.values()) out.push_back(std::clamp(v, 0.0, 1.0));
  });
  return out;
}

double WsdAccuracy(const WsdModel& wsd, const PreparedWsd& d, kernels::Exec exec) {
  std::vector<std::string> pred, gold_names;
  std::vector<std::size_t> gold;
  ForChunks(d.size(), [&](std::span<const std::size_t> idx) {
    Tape tape(exec);
    const Matrix& dist = tape.value(WsdBatch(tape, wsd, d, idx, {}, true, gold));
    for (std::size_t r = 0; r < idx.size(); ++r) {
      std::size_t best = d.columns[idx[r]].front();
      for (std::size_t c : d.columns[idx[r]]) {
        if (dist(r, c) > dist(r, best)) best = c;
      }
      pred.push_back(std::to_string(best));
      gold_names.push_back(std::to_string(gold[r]));
    }
  });
  return MicroF1(pred, gold_names);
}

// Everything a run needs, prepared against one bundle.
struct Prepared {
  SenseTable table;
  PreparedSmd smd_train, smd_dev;
  PreparedWsd wsd_train, wsd_dev;
  bool has_smd = false;
  bool has_wsd = false;
};

Prepared Prepare(const ModelBundle& b, const TrainData& data, const EmbeddingStore& store,
                 const Lexicon& lexicon, std::map<std::string, std::size_t>* skipped) {
  Prepared p;
  p.has_smd = IsCombined(b) || b.smd.has_value();
  p.has_wsd = b.wsd.has_value();
  if (p.has_smd) {
    p.smd_train = PrepareSmd(data.smd_train, b, store, lexicon, &p.table,
                             Skipper(skipped, "smd_train"));
    p.smd_dev = PrepareSmd(data.smd_dev, b, store, lexicon, &p.table, Skipper(skipped, "smd_dev"));
    p.table.Finish(store.dimension());
  }
  if (p.has_wsd) {
    p.wsd_train = PrepareWsd(data.wsd_train, *b.wsd, store, lexicon, Skipper(skipped, "wsd_train"));
    p.wsd_dev = PrepareWsd(data.wsd_dev, *b.wsd, store, lexicon, Skipper(skipped, "wsd_dev"));
  }
  return p;
}

// Weight of the SMD term in a phase.
double PhaseAlpha(const ModelBundle& b, const TrainConfig& c, int phase) {
  if (IsCombined(b)) return phase == 1 ? c.alpha : 1.0;
  return b.smd ? 1.0 : 0.0;
}

double DevLossPrepared(const ModelBundle& b, const Prepared& p, double alpha, kernels::Exec exec) {
  if (alpha == 1.0) return SmdLossFull(b, p.smd_dev, &p.table, exec);
  if (alpha == 0.0) return WsdLossFull(*b.wsd, p.wsd_dev, exec);
  return LossJoint(alpha, SmdLossFull(b, p.smd_dev, &p.table, exec),
                   WsdLossFull(*b.wsd, p.wsd_dev, exec));
}

void RequireNonempty(std::size_t n, const char* split) {
  if (n == 0) {
    throw DataError(std::string(split) + " is empty after skipping unusable examples");
  }
}

// Shuffled epochs over one corpus; reshuffles when exhausted.
class Sampler {
 public:
  Sampler(std::size_t n, CounterRng rng) : order_(n), rng_(rng) { Shuffle(); }

  void Next(std::size_t count, std::vector<std::size_t>& out) {
    out.clear();
    for (std::size_t i = 0; i < count; ++i) {
      if (pos_ == order_.size()) Shuffle();
      out.push_back(order_[pos_++]);
    }
  }

  const CounterRng& rng() const { return rng_; }

 private:
  void Shuffle() {
    std::iota(order_.begin(), order_.end(), 0);
    for (std::size_t i = order_.size(); i > 1; --i) {
      std::swap(order_[i - 1], order_[rng_.Below(i)]);
    }
    pos_ = 0;
  }

  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
  CounterRng rng_;
};

json RngJson(const CounterRng& r) { return {{"key", r.key()}, {"counter", r.counter()}}; }

std::vector<const Matrix*> MlpMatrices(const MlpParams& p) {
  std::vector<const Matrix*> out;
  for (const MlpLayer& l : p.layers) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  return out;
}

void CollectGrads(const Tape& tape, std::span<const Matrix* const> params, LossOutput& out) {
  for (const Matrix* m : params) {
    if (const Matrix* g = tape.ParamGrad(*m)) out.grads.emplace(m, *g);
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Losses

double LossJoint(double alpha, double l_smd, double l_wsd) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw ConfigError("alpha " + std::to_string(alpha) + " outside [0, 1]");
  }
  return alpha * l_smd + (1.0 - alpha) * l_wsd;
}

LossOutput LossSmd(const MpdModel& mpd, const WsdModel& wsd, const EmbeddingStore& store,
                   const Lexicon& lexicon, std::span<const SmdExample> batch) {
  if (batch.empty()) throw DataError("loss_smd: empty batch");
  ModelBundle b;
  b.mpd = mpd;
  b.wsd = wsd;
  SenseTable table;
  const PreparedSmd d = PrepareSmd(batch, b, store, lexicon, &table, Skipper(nullptr, ""));
  table.Finish(store.dimension());
  std::vector<std::size_t> idx(d.size());
  std::iota(idx.begin(), idx.end(), 0);
  Tape tape;
  Tape::Var loss = tape.BinaryCrossEntropy(SmdBatch(tape, b, d, &table, idx, {}, true), d.labels);
  tape.Backward(loss);
  LossOutput out{tape.value(loss)[0], {}};
  // Gradients are reported against the caller's matrices, not the copies.
  auto ours = MlpMatrices(b.mpd->mlp);
  auto theirs = MlpMatrices(mpd.mlp);
  auto ours_w = MlpMatrices(b.wsd->mlp);
  auto theirs_w = MlpMatrices(wsd.mlp);
  ours.insert(ours.end(), ours_w.begin(), ours_w.end());
  theirs.insert(theirs.end(), theirs_w.begin(), theirs_w.end());
  for (std::size_t i = 0; i < ours.size(); ++i) {
    if (const Matrix* g = tape.ParamGrad(*ours[i])) out.grads.emplace(theirs[i], *g);
  }
  return out;
}

LossOutput LossWsd(const WsdModel& wsd, const EmbeddingStore& store, const Lexicon& lexicon,
                   std::span<const WsdExample> batch) {
  if (batch.empty()) throw DataError("loss_wsd: empty batch");
  for (const WsdExample& ex : batch) {
    const auto candidates = CandidateSenses(lexicon, ex.token.wordform());
    if (std::find(candidates.begin(), candidates.end(), ex.gold) == candidates.end()) {
      throw DataError("loss_wsd: gold sense <" + ex.gold.wordform + ", " +
                      ex.gold.definition_id + "> is not a candidate of token '" +
                      TokenKey(ex.token) + "'");
    }
  }
  const PreparedWsd d = PrepareWsd(batch, wsd, store, lexicon, Skipper(nullptr, ""));
  std::vector<std::size_t> idx(d.size()), gold;
  std::iota(idx.begin(), idx.end(), 0);
  Tape tape;
  Tape::Var dist = WsdBatch(tape, wsd, d, idx, {}, true, gold);
  Tape::Var loss = tape.CategoricalNll(dist, gold);
  tape.Backward(loss);
  LossOutput out{tape.value(loss)[0], {}};
  CollectGrads(tape, MlpMatrices(wsd.mlp), out);
  return out;
}

// ---------------------------------------------------------------------------
// Trainer

namespace {

class Trainer {
 public:
  Trainer(const TrainConfig& config, const TrainData& data, const EmbeddingStore& store,
          const Lexicon& lexicon, const TrainOptions& options)
      : config_(config), options_(options) {
    config_.Validate();
    const CounterRng root(config_.seed);
    bundle_ = BuildBundle(config_.Spec(store.dimension()), store, lexicon, root.Split("init"));
    report_.config = config_;
    prepared_ = Prepare(bundle_, data, store, lexicon, &report_.skipped);

    const bool uses_wsd = PhaseAlpha(bundle_, config_, 1) < 1.0;
    if (prepared_.has_smd) {
      RequireNonempty(prepared_.smd_train.size(), "smd_train");
      RequireNonempty(prepared_.smd_dev.size(), "smd_dev");
    }
    if (uses_wsd) {
      RequireNonempty(prepared_.wsd_train.size(), "wsd_train");
      RequireNonempty(prepared_.wsd_dev.size(), "wsd_dev");
    }
    if (prepared_.has_smd) smd_.emplace(prepared_.smd_train.size(), root.Split("smd_order"));
    if (uses_wsd) wsd_.emplace(prepared_.wsd_train.size(), root.Split("wsd_order"));
    dropout_ = root.Split("dropout");

    params_ = bundle_.AllParams();
    phi_ = bundle_.Params(ParamGroup::kPhi);
    optimizer_ = AdamW(params_, config_.Optimizer());
  }

  TrainResult Run() {
    int phase = 1;
    double alpha = PhaseAlpha(bundle_, config_, 1);
    double best = std::numeric_limits<double>::infinity();
    std::size_t bad = 0;
    std::uint64_t step = 0;
    report_.learning_rate[0] = optimizer_.options().learning_rate;

    while (true) {
      if (config_.max_steps != 0 && step >= config_.max_steps) {
        if (snapshot_) Restore();
        report_.stop_reason = "max_steps";
        break;
      }
      Step(alpha, phase == 2 && IsCombined(bundle_));
      ++step;
      Emit(TrainEventKind::kStep, step, phase);
      if (options_.probe_interval != 0 && step % options_.probe_interval == 0) {
        (void)DevLossPrepared(bundle_, prepared_, alpha, options_.exec);
      }
      if (step % config_.check_interval != 0) continue;

      const double dev = DevLossPrepared(bundle_, prepared_, alpha, options_.exec);
      const bool improved = dev < best - kImprovementTolerance;
      report_.checks.push_back({step, phase, dev, improved});
      if (improved) {
        best = dev;
        bad = 0;
        report_.best_step[phase - 1] = step;
        report_.best_dev_loss[phase - 1] = dev;
        Snapshot();
      } else {
        ++bad;
      }
      Emit(TrainEventKind::kCheck, step, phase);
      if (bad < config_.patience) continue;

      Restore();
      if (phase == 2) {
        report_.stop_reason = "second patience exhaustion";
        break;
      }
      report_.phase1_restored_dev_loss = DevLossPrepared(bundle_, prepared_, alpha, options_.exec);
      report_.phase_transition_step = step;
      phase = 2;
      alpha = PhaseAlpha(bundle_, config_, 2);
      optimizer_.options().learning_rate /= config_.lr_divisor;
      report_.learning_rate[1] = optimizer_.options().learning_rate;
      // The restored model is the phase-2 baseline.
      best = DevLossPrepared(bundle_, prepared_, alpha, options_.exec);
      report_.phase2_initial_dev_loss = best;
      report_.best_step[1] = report_.best_step[0];
      report_.best_dev_loss[1] = best;
      bad = 0;
      Snapshot();
      Emit(TrainEventKind::kPhaseTransition, step, phase);
    }
    report_.steps = step;
    Emit(TrainEventKind::kStop, step, phase);
    FinalMetrics();

    TrainResult result;
    result.rng_state = json::object();
    result.rng_state["dropout"] = RngJson(dropout_);
    if (smd_) result.rng_state["smd_order"] = RngJson(smd_->rng());
    if (wsd_) result.rng_state["wsd_order"] = RngJson(wsd_->rng());
    result.bundle = std::move(bundle_);
    result.report = std::move(report_);
    return result;
  }

 private:
  struct State {
    std::vector<Matrix> params;
    std::vector<Matrix> m, v;
    std::uint64_t step = 0;
  };

  void Step(double alpha, bool phi_frozen) {
    Tape tape(options_.exec);
    ForwardOptions opts{true, &dropout_};
    std::optional<Tape::Var> loss;
    if (alpha > 0.0) {
      smd_->Next(config_.batch_size, batch_);
      labels_.clear();
      for (std::size_t i : batch_) labels_.push_back(prepared_.smd_train.labels[i]);
      Tape::Var p =
          SmdBatch(tape, bundle_, prepared_.smd_train, &prepared_.table, batch_, opts, !phi_frozen);
      Tape::Var l = tape.BinaryCrossEntropy(p, labels_);
      loss = alpha == 1.0 ? l : tape.Scale(l, alpha);
    }
    if (alpha < 1.0) {
      wsd_->Next(config_.batch_size, batch_);
      Tape::Var dist =
          WsdBatch(tape, *bundle_.wsd, prepared_.wsd_train, batch_, opts, !phi_frozen, gold_);
      Tape::Var l = tape.CategoricalNll(dist, gold_);
      if (alpha != 0.0) l = tape.Scale(l, 1.0 - alpha);
      loss = loss ? tape.Add(*loss, l) : l;
    }
    tape.Backward(*loss);
    grads_.clear();
    for (const ParamRef& p : params_) {
      const bool frozen = phi_frozen && IsPhi(p);
      grads_.push_back(frozen ? nullptr : tape.ParamGrad(*p.value));
    }
    optimizer_.Step(params_, grads_);
  }

  bool IsPhi(const ParamRef& p) const {
    for (const ParamRef& q : phi_) {
      if (q.value == p.value) return true;
    }
    return false;
  }

  void Snapshot() {
    State s;
    for (const ParamRef& p : params_) s.params.push_back(*p.value);
    s.m = optimizer_.first_moments();
    s.v = optimizer_.second_moments();
    s.step = optimizer_.step();
    snapshot_ = std::move(s);
  }

  void Restore() {
    for (std::size_t i = 0; i < params_.size(); ++i) *params_[i].value = snapshot_->params[i];
    optimizer_.first_moments() = snapshot_->m;
    optimizer_.second_moments() = snapshot_->v;
    optimizer_.set_step(snapshot_->step);
  }

  void Emit(TrainEventKind kind, std::uint64_t step, int phase) {
    if (!options_.observer) return;
    options_.observer(
        TrainEvent{kind, step, phase, optimizer_.options().learning_rate, &bundle_});
  }

  void FinalMetrics() {
    const kernels::Exec exec = options_.exec;
    if (prepared_.has_smd) {
      auto f1 = [&](const PreparedSmd& d) {
        return F1Binary(SmdPredictions(bundle_, d, &prepared_.table, exec), d.labels);
      };
      report_.smd_train_f1 = f1(prepared_.smd_train);
      report_.smd_dev_f1 = f1(prepared_.smd_dev);
    }
    if (prepared_.has_wsd) {
      if (prepared_.wsd_train.size() != 0) {
        report_.wsd_train_micro_f1 = WsdAccuracy(*bundle_.wsd, prepared_.wsd_train, exec);
      }
      if (prepared_.wsd_dev.size() != 0) {
        report_.wsd_dev_micro_f1 = WsdAccuracy(*bundle_.wsd, prepared_.wsd_dev, exec);
      }
    }
  }

  TrainConfig config_;
  TrainOptions options_;
  ModelBundle bundle_;
  TrainReport report_;
  Prepared prepared_;
  std::optional<Sampler> smd_, wsd_;
  CounterRng dropout_;
  std::vector<ParamRef> params_, phi_;
  AdamW optimizer_;
  std::optional<State> snapshot_;

  std::vector<std::size_t> batch_, gold_;
  std::vector<int> labels_;
  std::vector<const Matrix*> grads_;
};

json OptionalJson(const auto& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

TrainResult Train(const TrainConfig& config, const TrainData& data, const EmbeddingStore& store,
                  const Lexicon& lexicon, const TrainOptions& options) {
  return Trainer(config, data, store, lexicon, options).Run();
}

double DevLoss(const ModelBundle& bundle, const TrainConfig& config, int phase,
               const TrainData& data, const EmbeddingStore& store, const Lexicon& lexicon) {
  std::map<std::string, std::size_t> skipped;
  const Prepared p = Prepare(bundle, data, store, lexicon, &skipped);
  return DevLossPrepared(bundle, p, PhaseAlpha(bundle, config, phase), kernels::Exec::kParallel);
}

json TrainReport::ToJson() const {
  json checks_json = json::array();
  for (const DevCheck& c : checks) {
    checks_json.push_back(
        {{"step", c.step}, {"phase", c.phase}, {"dev_loss", c.dev_loss}, {"improved", c.improved}});
  }
  return {{"config", config.ToJson()},
          {"seed", config.seed},
          {"rng_streams", {"init", "dropout", "smd_order", "wsd_order"}},
          {"checks", checks_json},
          {"phase_transition_step", OptionalJson(phase_transition_step)},
          {"best_step", {OptionalJson(best_step[0]), OptionalJson(best_step[1])}},
          {"best_dev_loss", {OptionalJson(best_dev_loss[0]), OptionalJson(best_dev_loss[1])}},
          {"phase1_restored_dev_loss", OptionalJson(phase1_restored_dev_loss)},
          {"phase2_initial_dev_loss", OptionalJson(phase2_initial_dev_loss)},
          {"learning_rate", learning_rate},
          {"steps", steps},
          {"stop_reason", stop_reason},
          {"skipped", skipped},
          {"metrics",
           {{"smd_train_f1", OptionalJson(smd_train_f1)},
            {"smd_dev_f1", OptionalJson(smd_dev_f1)},
            {"wsd_train_micro_f1", OptionalJson(wsd_train_micro_f1)},
            {"wsd_dev_micro_f1", OptionalJson(wsd_dev_micro_f1)}}}};
}

// ---------------------------------------------------------------------------
// Search and selection

void SearchSpace::Validate() const {
  if (layers.empty() || hidden.empty() || dropout.empty() || learning_rate.empty() ||
      lr_divisor.empty() || alpha.empty()) {
    throw ConfigError("search space has an empty dimension");
  }
}

json SearchSpace::ToJson() const {
  return {{"n", layers},  {"h", hidden},          {"x", dropout},
          {"lr", learning_rate}, {"lr_divisor", lr_divisor}, {"alpha", alpha}};
}

std::vector<TrainConfig> SampleSearchConfigs(const SearchSpace& space, std::size_t per_alpha_samples,
                                             const TrainConfig& base, std::uint64_t seed) {
  space.Validate();
  if (per_alpha_samples == 0) throw ConfigError("per_alpha_samples must be positive");
  const CounterRng root(seed);
  const CounterRng seeds = root.Split("run_seeds");
  std::vector<TrainConfig> out;
  for (std::size_t a = 0; a < space.alpha.size(); ++a) {
    for (std::size_t s = 0; s < per_alpha_samples; ++s) {
      const std::size_t index = out.size();
      CounterRng rng = root.Split("draws").Split(static_cast<std::uint64_t>(index));
      auto pick = [&rng](const auto& v) { return v[rng.Below(v.size())]; };
      TrainConfig c = base;
      c.alpha = space.alpha[a];
      c.phi.layers = pick(space.layers);
      c.phi.hidden = pick(space.hidden);
      c.theta.layers = pick(space.layers);
      c.theta.hidden = pick(space.hidden);
      c.dropout = pick(space.dropout);
      c.learning_rate = pick(space.learning_rate);
      c.lr_divisor = pick(space.lr_divisor);
      c.seed = seeds.At(index);
      out.push_back(c);
    }
  }
  return out;
}

std::vector<SearchRun> HyperparamSearch(const SearchSpace& space, std::size_t per_alpha_samples,
                                        const TrainConfig& base, std::uint64_t seed,
                                        const TrainData& data, const EmbeddingStore& store,
                                        const Lexicon& lexicon, std::size_t max_runs) {
  std::vector<TrainConfig> configs = SampleSearchConfigs(space, per_alpha_samples, base, seed);
  if (max_runs != 0 && configs.size() > max_runs) configs.resize(max_runs);
  std::vector<SearchRun> runs(configs.size());
  std::vector<std::exception_ptr> errors(configs.size());
  const auto n = static_cast<std::ptrdiff_t>(configs.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      TrainOptions opts;
      opts.exec = kernels::Exec::kSerial;
      runs[i].index = static_cast<std::size_t>(i);
      runs[i].config = configs[i];
      runs[i].report = Train(configs[i], data, store, lexicon, opts).report;
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return runs;
}

SelectionCriterion ParseSelectionCriterion(std::string_view name) {
  if (name == "smd_dev_f1") return SelectionCriterion::kSmdDevF1;
  if (name == "wsd_dev_micro_f1") return SelectionCriterion::kWsdDevMicroF1;
  if (name == "mean_smd_wsd") return SelectionCriterion::kMeanSmdWsd;
  throw ConfigError("unknown selection criterion '" + std::string(name) + "'");
}

std::string_view SelectionCriterionName(SelectionCriterion c) {
  switch (c) {
    case SelectionCriterion::kSmdDevF1:
      return "smd_dev_f1";
    case SelectionCriterion::kWsdDevMicroF1:
      return "wsd_dev_micro_f1";
    case SelectionCriterion::kMeanSmdWsd:
      return "mean_smd_wsd";
  }
  return "?";
}

Selection SelectModel(std::span<const TrainReport> runs, SelectionCriterion criterion) {
  if (runs.empty()) throw DataError("select_model: no runs");
  auto need = [](const std::optional<double>& v, std::size_t i, const char* name) {
    if (!v) throw DataError("select_model: run " + std::to_string(i) + " has no " + name);
    return *v;
  };
  std::vector<double> values;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const TrainReport& r = runs[i];
    switch (criterion) {
      case SelectionCriterion::kSmdDevF1:
        values.push_back(need(r.smd_dev_f1, i, "smd_dev_f1"));
        break;
      case SelectionCriterion::kWsdDevMicroF1:
        values.push_back(need(r.wsd_dev_micro_f1, i, "wsd_dev_micro_f1"));
        break;
      case SelectionCriterion::kMeanSmdWsd:
        values.push_back(
            (need(r.smd_dev_f1, i, "smd_dev_f1") + need(r.wsd_dev_micro_f1, i, "wsd_dev_micro_f1")) /
            2.0);
        break;
    }
  }
  Selection sel;
  sel.index = static_cast<std::size_t>(std::max_element(values.begin(), values.end()) -
                                       values.begin());
  sel.value = values[sel.index];
  sel.tie = std::count(values.begin(), values.end(), sel.value) > 1;
  return sel;
}

}  // namespace mpd
