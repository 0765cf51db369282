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

#include "mpd/models.h"

#include <algorithm>

#include "mpd/error.h"

namespace mpd {

std::optional<std::size_t> WsdModel::Column(const Lexicon& lexicon, const Sense& sense) const {
  if (kind == WsdKind::kBaseline) return lexicon.SenseIndex(sense);
  if (!lexicon.SenseIndex(sense)) return std::nullopt;
  return lexicon.DefinitionIndex(sense.definition_id);
}

std::size_t WsdModel::num_columns() const {
  return kind == WsdKind::kBaseline ? mlp.config.output : synsets.cols();
}

void SmdModel::AppendParams(const std::string& prefix, std::vector<ParamRef>& out) {
  if (kind == SmdKind::kBaseline) {
    mlp.AppendParams(prefix, out);
    return;
  }
  spv.AppendParams(prefix + ".spv", out);
  mip.AppendParams(prefix + ".mip", out);
  out.push_back({prefix + ".head.weight", &head.weight});
  out.push_back({prefix + ".head.bias", &head.bias});
}

namespace {

MlpConfig Config(std::size_t in, std::size_t out, ArchConfig arch, double dropout) {
  return MlpConfig{in, out, arch.layers, arch.hidden, dropout};
}

}  // namespace

MpdModel MakeMpdModel(std::size_t k, ArchConfig arch, double dropout, CounterRng rng) {
  return MpdModel{InitMlp(Config(2 * k, 1, arch, dropout), rng)};
}

WsdModel MakeWsdBaseline(std::size_t k, const Lexicon& lexicon, ArchConfig arch, double dropout,
                         CounterRng rng) {
  if (lexicon.num_senses() == 0) throw ConfigError("WSD baseline needs a nonempty lexicon");
  WsdModel m;
  m.kind = WsdKind::kBaseline;
  m.mlp = InitMlp(Config(k, lexicon.num_senses(), arch, dropout), rng);
  return m;
}

WsdModel MakeEwiser(const EmbeddingStore& store, const Lexicon& lexicon, ArchConfig arch,
                    double dropout, CounterRng rng) {
  const std::size_t k = store.dimension();
  const std::size_t n = lexicon.num_definitions();
  if (n == 0) throw ConfigError("EWISER needs a nonempty lexicon");
  WsdModel m;
  m.kind = WsdKind::kEwiser;
  m.mlp = InitMlp(Config(k, k, arch, dropout), rng);
  m.synsets = Matrix(k, n);
  for (std::size_t j = 0; j < n; ++j) {
    const std::string& id = lexicon.definitions()[j].id;
    if (!store.Contains(Namespace::kSynset, id)) {
      m.missing_synsets.push_back(id);
      continue;
    }
    auto raw = store.Raw(Namespace::kSynset, id);
    for (std::size_t i = 0; i < k; ++i) m.synsets(i, j) = raw[i];
  }
  m.adjacency = BuildHypernymAdjacency(lexicon).matrix;
  return m;
}

SmdModel MakeSmdBaseline(std::size_t k, ArchConfig arch, double dropout, CounterRng rng) {
  SmdModel m;
  m.kind = SmdKind::kBaseline;
  m.mlp = InitMlp(Config(k, 1, arch, dropout), rng);
  return m;
}

SmdModel MakeMelbert(std::size_t k, ArchConfig spv, ArchConfig mip, double dropout,
                     CounterRng rng) {
  SmdModel m;
  m.kind = SmdKind::kMelbert;
  m.spv = InitMlp(Config(2 * k, k, spv, dropout), rng.Split("spv"));
  m.mip = InitMlp(Config(2 * k, k, mip, dropout), rng.Split("mip"));
  MlpParams head = InitMlp(MlpConfig{2 * k, 1, 1, 0, 0.0}, rng.Split("head"));
  m.head = std::move(head.layers.front());
  return m;
}

Matrix MpdInputs(const EmbeddingStore& store, std::span<const Sense> senses) {
  const std::size_t k = store.dimension();
  Matrix out(senses.size(), 2 * k);
  for (std::size_t r = 0; r < senses.size(); ++r) {
    auto type = store.Raw(Namespace::kType, senses[r].wordform);
    auto syn = store.Raw(Namespace::kSynset, senses[r].definition_id);
    auto row = out.row(r);
    std::copy(type.begin(), type.end(), row.begin());
    std::copy(syn.begin(), syn.end(), row.begin() + static_cast<std::ptrdiff_t>(k));
  }
  return out;
}

Matrix StackVectors(const EmbeddingStore& store, Namespace ns, std::span<const std::string> keys) {
  Matrix out(keys.size(), store.dimension());
  for (std::size_t r = 0; r < keys.size(); ++r) {
    auto raw = store.Raw(ns, keys[r]);
    std::copy(raw.begin(), raw.end(), out.row(r).begin());
  }
  return out;
}

Tape::Var MpdForward(Tape& tape, const MpdModel& model, Tape::Var inputs, ForwardOptions opts,
                     bool trainable) {
  return tape.Sigmoid(MlpForward(tape, model.mlp, inputs, opts.train, opts.rng, trainable));
}

Tape::Var WsdForward(Tape& tape, const WsdModel& model, Tape::Var tokens,
                     const Tape::Candidates& columns, ForwardOptions opts, bool trainable) {
  Tape::Var h = MlpForward(tape, model.mlp, tokens, opts.train, opts.rng, trainable);
  if (model.kind == WsdKind::kBaseline) return tape.MaskedSoftmax(h, columns);
  Tape::Var z = tape.MatMulFrozen(h, model.synsets);
  Tape::Var scores = tape.Add(tape.MatMulFrozenT(z, model.adjacency), z);
  return tape.MaskedRenormalize(tape.Sigmoid(scores), columns);
}

Tape::Var SmdForward(Tape& tape, const SmdModel& model, Tape::Var tokens, Tape::Var sents,
                     Tape::Var types, ForwardOptions opts, bool trainable) {
  if (model.kind == SmdKind::kBaseline) {
    return tape.Sigmoid(MlpForward(tape, model.mlp, tokens, opts.train, opts.rng, trainable));
  }
  Tape::Var spv =
      MlpForward(tape, model.spv, tape.ConcatCols(tokens, sents), opts.train, opts.rng, trainable);
  Tape::Var mip =
      MlpForward(tape, model.mip, tape.ConcatCols(tokens, types), opts.train, opts.rng, trainable);
  Tape::Var both = tape.ConcatCols(mip, spv);
  Tape::Var logit = tape.Affine(both, tape.Parameter(model.head.weight, trainable),
                                tape.Parameter(model.head.bias, trainable));
  return tape.Sigmoid(logit);
}

Tape::Var CombinedForward(Tape& tape, const MpdModel& mpd, const WsdModel& wsd,
                          Tape::Var mpd_inputs, Tape::Var tokens, const CombinedLayout& layout,
                          ForwardOptions opts, bool train_mpd, bool train_wsd) {
  const std::size_t batch = tape.value(tokens).rows();
  if (layout.columns.size() != batch || layout.gather.size() != layout.segment.size() ||
      layout.gather.size() != tape.value(mpd_inputs).rows()) {
    throw ShapeError("CombinedForward: layout does not match batch");
  }
  Tape::Var p_sense = MpdForward(tape, mpd, mpd_inputs, opts, train_mpd);
  Tape::Var dist = WsdForward(tape, wsd, tokens, layout.columns, opts, train_wsd);
  Tape::Var p_wsd = tape.Gather(dist, layout.gather);
  return tape.SegmentSum(tape.Mul(p_sense, p_wsd), layout.segment, batch);
}

std::vector<Sense> UsableCandidates(const Lexicon& lexicon, const EmbeddingStore& store,
                                    const Token& token) {
  std::vector<Sense> out;
  for (Sense& s : CandidateSenses(lexicon, token.wordform())) {
    if (store.Contains(Namespace::kType, s.wordform) &&
        store.Contains(Namespace::kSynset, s.definition_id)) {
      out.push_back(std::move(s));
    }
  }
  return out;
}

double MpdScore(const MpdModel& model, const EmbeddingStore& store, const Sense& sense) {
  Tape tape(kernels::Exec::kSerial);
  Tape::Var in = tape.Input(MpdInputs(store, std::span<const Sense>(&sense, 1)));
  return tape.value(MpdForward(tape, model, in, {}))[0];
}

namespace {

std::vector<std::size_t> ColumnsOf(const WsdModel& model, const Lexicon& lexicon,
                                   std::span<const Sense> candidates) {
  std::vector<std::size_t> cols;
  cols.reserve(candidates.size());
  for (const Sense& s : candidates) {
    auto c = model.Column(lexicon, s);
    if (!c) {
      throw DataError("sense <" + s.wordform + ", " + s.definition_id + "> is not in the lexicon");
    }
    cols.push_back(*c);
  }
  return cols;
}

}  // namespace

std::vector<double> WsdScores(const WsdModel& model, const EmbeddingStore& store,
                              const Lexicon& lexicon, const Token& token,
                              std::span<const Sense> candidates) {
  if (candidates.empty()) throw DataError("WsdScores: empty candidate list");
  const std::string wordform = token.wordform();
  for (const Sense& s : candidates) {
    if (s.wordform != wordform) {
      throw DataError("candidate <" + s.wordform + ", " + s.definition_id +
                      "> does not belong to token wordform '" + wordform + "'");
    }
  }
  Tape::Candidates columns{ColumnsOf(model, lexicon, candidates)};
  Tape tape(kernels::Exec::kSerial);
  const std::string key = TokenKey(token);
  Tape::Var tok = tape.Input(StackVectors(store, Namespace::kToken, std::span(&key, 1)));
  const Matrix& dist = tape.value(WsdForward(tape, model, tok, columns, {}));
  std::vector<double> out;
  for (std::size_t c : columns[0]) out.push_back(dist(0, c));
  return out;
}

double SmdScore(const SmdModel& model, const EmbeddingStore& store, const Token& token) {
  Tape tape(kernels::Exec::kSerial);
  const std::string key = TokenKey(token);
  Tape::Var tok = tape.Input(StackVectors(store, Namespace::kToken, std::span(&key, 1)));
  Tape::Var sent = tok;
  Tape::Var type = tok;
  if (model.kind == SmdKind::kMelbert) {
    const std::string skey = SentKey(token);
    const std::string wkey = token.wordform();
    sent = tape.Input(StackVectors(store, Namespace::kSent, std::span(&skey, 1)));
    type = tape.Input(StackVectors(store, Namespace::kType, std::span(&wkey, 1)));
  }
  return tape.value(SmdForward(tape, model, tok, sent, type, {}))[0];
}

double CombinedSmdScore(const MpdModel& mpd, const WsdModel& wsd, const EmbeddingStore& store,
                        const Lexicon& lexicon, const Token& token) {
  const std::vector<Sense> candidates = UsableCandidates(lexicon, store, token);
  if (candidates.empty()) {
    throw DataError("token '" + TokenKey(token) + "' (wordform '" + token.wordform() +
                    "') has no candidate senses with embeddings");
  }
  CombinedLayout layout;
  layout.columns.push_back(ColumnsOf(wsd, lexicon, candidates));
  for (std::size_t c : layout.columns[0]) {
    layout.gather.emplace_back(0, c);
    layout.segment.push_back(0);
  }
  Tape tape(kernels::Exec::kSerial);
  const std::string key = TokenKey(token);
  Tape::Var tok = tape.Input(StackVectors(store, Namespace::kToken, std::span(&key, 1)));
  Tape::Var inputs = tape.Input(MpdInputs(store, candidates));
  const double p = tape.value(CombinedForward(tape, mpd, wsd, inputs, tok, layout, {}))[0];
  return std::clamp(p, 0.0, 1.0);
}

std::vector<double> MpdScoreAll(const MpdModel& model, const EmbeddingStore& store,
                                std::span<const Sense> senses) {
  constexpr std::size_t kChunk = 256;
  std::vector<double> out(senses.size());
  const long long chunks = static_cast<long long>((senses.size() + kChunk - 1) / kChunk);
  // Rows are independent, so chunking does not change any score.
#pragma omp parallel for schedule(dynamic)
  for (long long c = 0; c < chunks; ++c) {
    const std::size_t begin = static_cast<std::size_t>(c) * kChunk;
    const std::size_t end = std::min(senses.size(), begin + kChunk);
    Tape tape(kernels::Exec::kSerial);
    Tape::Var in = tape.Input(MpdInputs(store, senses.subspan(begin, end - begin)));
    const Matrix& p = tape.value(MpdForward(tape, model, in, {}));
    for (std::size_t i = begin; i < end; ++i) out[i] = p[i - begin];
  }
  return out;
}

double MelbertAverage(const TokenScorer& scorer, std::span<const WsdExample> wsd_corpus,
                      const Sense& sense, CounterRng& rng) {
  double total = 0.0;
  std::size_t count = 0;
  for (const WsdExample& ex : wsd_corpus) {
    if (ex.gold == sense) {
      total += scorer(ex.token);
      ++count;
    }
  }
  if (count == 0) return rng.Uniform();
  return total / static_cast<double>(count);
}

BaselinePredictor::BaselinePredictor(BaselineKind kind, std::span<const int> train_labels,
                                     CounterRng rng)
    : kind_(kind), rng_(rng) {
  if (kind == BaselineKind::kMajority) {
    if (train_labels.empty()) throw DataError("majority baseline needs training labels");
    const auto positives = std::count(train_labels.begin(), train_labels.end(), 1);
    const auto negatives = static_cast<std::ptrdiff_t>(train_labels.size()) - positives;
    // Ties go to the literal class.
    constant_ = positives > negatives ? 1.0 : 0.0;
  }
}

double BaselinePredictor::Predict() {
  return kind_ == BaselineKind::kRandom ? rng_.Uniform() : constant_;
}

}  // namespace mpd
