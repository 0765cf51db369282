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

#ifndef MPD_MODELS_H_
#define MPD_MODELS_H_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mpd/corpora.h"
#include "mpd/embed_store.h"
#include "mpd/lexicon.h"
#include "mpd/mlp.h"
#include "mpd/rng.h"
#include "mpd/tape.h"

namespace mpd {

// Sense metaphoricity p(m | s): sigmoid of an MLP over TYPE(w) ∘ SYNSET(d).
struct MpdModel {
  MlpParams mlp;  // 2k -> 1

  void AppendParams(const std::string& prefix, std::vector<ParamRef>& out) {
    mlp.AppendParams(prefix, out);
  }
};

enum class WsdKind { kBaseline, kEwiser };

// Sense distribution p(s | t) over a token's candidate senses.
//
// Baseline: MLP k -> |S| over TOKEN(t), one output per lexicon sense, masked
// softmax over the candidates.
// EWISER: h = MLP k -> k over TOKEN(t); z = h O; scores = z A^T + z with O the
// frozen k x |D| synset matrix and A the frozen hypernym adjacency; each
// candidate gets sigmoid(score), renormalised over the candidates.
struct WsdModel {
  WsdKind kind = WsdKind::kBaseline;
  MlpParams mlp;
  Matrix synsets;    // O, EWISER only
  Matrix adjacency;  // A, EWISER only
  std::vector<std::string> missing_synsets;  // definitions with a zero column in O

  // Output column of a sense: its lexicon sense index for the baseline, its
  // definition index for EWISER. nullopt if the sense is not in the lexicon.
  std::optional<std::size_t> Column(const Lexicon& lexicon, const Sense& sense) const;
  std::size_t num_columns() const;

  void AppendParams(const std::string& prefix, std::vector<ParamRef>& out) {
    mlp.AppendParams(prefix, out);
  }
};

enum class SmdKind { kBaseline, kMelbert };

// Token metaphoricity p(m | t).
//
// Baseline: sigmoid(MLP k -> 1 over TOKEN(t)).
// MelBERT: h_spv = MLP 2k -> k over TOKEN ∘ SENT, h_mip = MLP 2k -> k over
// TOKEN ∘ TYPE, output sigmoid(linear 2k -> 1 over h_mip ∘ h_spv).
struct SmdModel {
  SmdKind kind = SmdKind::kBaseline;
  MlpParams mlp;       // baseline
  MlpParams spv;       // MelBERT
  MlpParams mip;       // MelBERT
  MlpLayer head;       // MelBERT, weight 1 x 2k, bias 1 x 1

  void AppendParams(const std::string& prefix, std::vector<ParamRef>& out);
};

struct ArchConfig {
  std::size_t layers = 1;
  std::size_t hidden = 0;

  friend bool operator==(const ArchConfig&, const ArchConfig&) = default;
};

MpdModel MakeMpdModel(std::size_t k, ArchConfig arch, double dropout, CounterRng rng);
WsdModel MakeWsdBaseline(std::size_t k, const Lexicon& lexicon, ArchConfig arch, double dropout,
                         CounterRng rng);
// O is filled from the store's SYNSET namespace in the lexicon's definition
// order; definitions without a vector get a zero column and are listed in
// missing_synsets.
WsdModel MakeEwiser(const EmbeddingStore& store, const Lexicon& lexicon, ArchConfig arch,
                    double dropout, CounterRng rng);
SmdModel MakeSmdBaseline(std::size_t k, ArchConfig arch, double dropout, CounterRng rng);
SmdModel MakeMelbert(std::size_t k, ArchConfig spv, ArchConfig mip, double dropout,
                     CounterRng rng);

// ---------------------------------------------------------------------------
// Batched graph builders. These are the only forward implementations; the
// single-item scoring functions below call them with a batch of one.

// Rows TYPE(w) ∘ SYNSET(d) for each sense. Throws MissingKeyError.
Matrix MpdInputs(const EmbeddingStore& store, std::span<const Sense> senses);
// Rows of one namespace. Throws MissingKeyError.
Matrix StackVectors(const EmbeddingStore& store, Namespace ns, std::span<const std::string> keys);

struct ForwardOptions {
  bool train = false;
  CounterRng* rng = nullptr;  // dropout stream, train mode only
};

// N x 1 probabilities.
Tape::Var MpdForward(Tape& tape, const MpdModel& model, Tape::Var inputs, ForwardOptions opts,
                     bool trainable = true);
// B x C distribution, nonzero only on each row's candidate columns.
Tape::Var WsdForward(Tape& tape, const WsdModel& model, Tape::Var tokens,
                     const Tape::Candidates& columns, ForwardOptions opts, bool trainable = true);
// B x 1 probabilities. sents and types are only read by MelBERT.
Tape::Var SmdForward(Tape& tape, const SmdModel& model, Tape::Var tokens, Tape::Var sents,
                     Tape::Var types, ForwardOptions opts, bool trainable = true);

// Layout of a combined batch: candidate senses of all B tokens stacked into N
// rows, with the WSD column and token row of each.
struct CombinedLayout {
  Tape::Candidates columns;  // per token, WSD columns of its candidates
  std::vector<std::pair<std::size_t, std::size_t>> gather;  // per candidate: (token, column)
  std::vector<std::size_t> segment;                         // per candidate: token row
};

// B x 1 marginal p(m | t) = sum over candidates of p(m | s) p(s | t).
Tape::Var CombinedForward(Tape& tape, const MpdModel& mpd, const WsdModel& wsd,
                          Tape::Var mpd_inputs, Tape::Var tokens, const CombinedLayout& layout,
                          ForwardOptions opts, bool train_mpd = true, bool train_wsd = true);

// Candidate senses of a token usable by the combined model: those with both
// TYPE and SYNSET vectors.
std::vector<Sense> UsableCandidates(const Lexicon& lexicon, const EmbeddingStore& store,
                                    const Token& token);

// ---------------------------------------------------------------------------
// Single-item scoring, eval mode.

double MpdScore(const MpdModel& model, const EmbeddingStore& store, const Sense& sense);

// Distribution over the given candidates, in their order.
std::vector<double> WsdScores(const WsdModel& model, const EmbeddingStore& store,
                              const Lexicon& lexicon, const Token& token,
                              std::span<const Sense> candidates);

double SmdScore(const SmdModel& model, const EmbeddingStore& store, const Token& token);

double CombinedSmdScore(const MpdModel& mpd, const WsdModel& wsd, const EmbeddingStore& store,
                        const Lexicon& lexicon, const Token& token);

// Scores many senses in one batched pass; OpenMP-parallel over chunks.
std::vector<double> MpdScoreAll(const MpdModel& model, const EmbeddingStore& store,
                                std::span<const Sense> senses);

// Mean SMD prediction over the WSD tokens whose gold sense is `sense`, or a
// uniform draw from rng when there are none.
using TokenScorer = std::function<double(const Token&)>;
double MelbertAverage(const TokenScorer& scorer, std::span<const WsdExample> wsd_corpus,
                      const Sense& sense, CounterRng& rng);

enum class BaselineKind { kRandom, kMajority };

// Random: a fresh uniform draw per query. Majority: 1.0 iff metaphorical
// labels are a strict majority of the training labels, else 0.0.
class BaselinePredictor {
 public:
  BaselinePredictor(BaselineKind kind, std::span<const int> train_labels, CounterRng rng);
  double Predict();
  BaselineKind kind() const { return kind_; }

 private:
  BaselineKind kind_;
  double constant_ = 0.0;
  CounterRng rng_;
};

}  // namespace mpd

#endif  // MPD_MODELS_H_
