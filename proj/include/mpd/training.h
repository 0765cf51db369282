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

#ifndef MPD_TRAINING_H_
#define MPD_TRAINING_H_

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "mpd/adamw.h"
#include "mpd/bundle.h"
#include "mpd/corpora.h"
#include "mpd/embed_store.h"
#include "mpd/kernels.h"
#include "mpd/lexicon.h"

namespace mpd {

struct TrainConfig {
  ModelKind model = ModelKind::kCombined;
  WsdKind wsd = WsdKind::kBaseline;
  double alpha = 0.8;
  double dropout = 0.1;
  ArchConfig phi{1, 300};
  ArchConfig theta{1, 300};
  double learning_rate = 1e-3;
  double lr_divisor = 10.0;
  std::size_t batch_size = 128;
  std::size_t check_interval = 50;
  std::size_t patience = 5;
  std::uint64_t seed = 0;
  std::size_t max_steps = 0;  // 0: until the second patience exhaustion
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;

  // Throws ConfigError.
  void Validate() const;
  // Sets one field from its textual form; keys as in Keys(). Throws
  // ConfigError on an unknown key or a malformed value.
  void Set(std::string_view key, std::string_view value);
  static const std::vector<std::string>& Keys();

  ModelSpec Spec(std::size_t k) const;
  AdamWOptions Optimizer() const;

  nlohmann::json ToJson() const;
  static TrainConfig FromJson(const nlohmann::json& j);

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

// ---------------------------------------------------------------------------
// Losses. Evaluated without dropout; gradients are keyed by parameter address
// and present for every parameter reached by the graph.

struct LossOutput {
  double value = 0.0;
  std::unordered_map<const Matrix*, Matrix> grads;
};

// Mean Bernoulli cross-entropy of the marginal p(m | t) against the labels.
LossOutput LossSmd(const MpdModel& mpd, const WsdModel& wsd, const EmbeddingStore& store,
                   const Lexicon& lexicon, std::span<const SmdExample> batch);
// Mean -log p(gold | t) over each token's lexicon candidates.
LossOutput LossWsd(const WsdModel& wsd, const EmbeddingStore& store, const Lexicon& lexicon,
                   std::span<const WsdExample> batch);
// alpha * l_smd + (1 - alpha) * l_wsd. Throws ConfigError unless alpha in [0, 1].
double LossJoint(double alpha, double l_smd, double l_wsd);

// ---------------------------------------------------------------------------
// Two-phase trainer.

struct TrainData {
  std::span<const SmdExample> smd_train;
  std::span<const SmdExample> smd_dev;
  std::span<const WsdExample> wsd_train;
  std::span<const WsdExample> wsd_dev;
};

struct DevCheck {
  std::uint64_t step = 0;
  int phase = 1;
  double dev_loss = 0.0;
  bool improved = false;
};

struct TrainReport {
  TrainConfig config;
  std::vector<DevCheck> checks;
  std::optional<std::uint64_t> phase_transition_step;
  std::array<std::optional<std::uint64_t>, 2> best_step;
  std::array<std::optional<double>, 2> best_dev_loss;
  // Dev loss recomputed after restoring the phase-1 best, under phase-1 and
  // phase-2 weighting respectively.
  std::optional<double> phase1_restored_dev_loss;
  std::optional<double> phase2_initial_dev_loss;
  std::array<double, 2> learning_rate{0.0, 0.0};
  std::uint64_t steps = 0;
  std::string stop_reason;
  // "<split>: <reason>" -> examples dropped before training.
  std::map<std::string, std::size_t> skipped;
  std::optional<double> smd_train_f1;
  std::optional<double> smd_dev_f1;
  std::optional<double> wsd_train_micro_f1;
  std::optional<double> wsd_dev_micro_f1;

  nlohmann::json ToJson() const;
};

enum class TrainEventKind { kStep, kCheck, kPhaseTransition, kStop };

struct TrainEvent {
  TrainEventKind kind = TrainEventKind::kStep;
  std::uint64_t step = 0;
  int phase = 1;
  double learning_rate = 0.0;
  const ModelBundle* bundle = nullptr;
};

struct TrainOptions {
  std::function<void(const TrainEvent&)> observer;
  // Extra dev-loss evaluations every this many steps whose results are
  // discarded. Zero disables. Used to show evaluation leaves training intact.
  std::size_t probe_interval = 0;
  kernels::Exec exec = kernels::Exec::kParallel;
};

struct TrainResult {
  ModelBundle bundle;
  TrainReport report;
  nlohmann::json rng_state;  // stream name -> {key, counter}
};

// Throws ConfigError for an invalid config or an untrainable kind and
// DataError when a required split is empty after skipping.
TrainResult Train(const TrainConfig& config, const TrainData& data, const EmbeddingStore& store,
                  const Lexicon& lexicon, const TrainOptions& options = {});

// Dev loss of a bundle under the given phase's weighting, eval mode.
double DevLoss(const ModelBundle& bundle, const TrainConfig& config, int phase,
               const TrainData& data, const EmbeddingStore& store, const Lexicon& lexicon);

// ---------------------------------------------------------------------------
// Random search and model selection.

struct SearchSpace {
  std::vector<std::size_t> layers{1, 2, 3, 4};
  std::vector<std::size_t> hidden{100, 300, 500};
  std::vector<double> dropout{0.1, 0.2, 0.3, 0.4};
  std::vector<double> learning_rate{0.005, 0.001, 0.0005, 0.0001};
  std::vector<double> lr_divisor{1, 10};
  std::vector<double> alpha{0.0, 0.2, 0.4, 0.6, 0.8, 1.0};

  void Validate() const;
  nlohmann::json ToJson() const;
};

// For each alpha in order, per_alpha_samples configs whose remaining fields
// are independent uniform draws from the grid. The other fields, and the
// seed of run i, come from base and CounterRng(seed).
std::vector<TrainConfig> SampleSearchConfigs(const SearchSpace& space, std::size_t per_alpha_samples,
                                             const TrainConfig& base, std::uint64_t seed);

struct SearchRun {
  std::size_t index = 0;
  TrainConfig config;
  TrainReport report;
};

// Trains every sampled config (at most max_runs when nonzero), runs in
// parallel. Each run is single-threaded, so results do not depend on the
// thread count.
std::vector<SearchRun> HyperparamSearch(const SearchSpace& space, std::size_t per_alpha_samples,
                                        const TrainConfig& base, std::uint64_t seed,
                                        const TrainData& data, const EmbeddingStore& store,
                                        const Lexicon& lexicon, std::size_t max_runs = 0);

enum class SelectionCriterion { kSmdDevF1, kWsdDevMicroF1, kMeanSmdWsd };

SelectionCriterion ParseSelectionCriterion(std::string_view name);
std::string_view SelectionCriterionName(SelectionCriterion c);

struct Selection {
  std::size_t index = 0;
  double value = 0.0;
  bool tie = false;
};

// Argmax of the criterion over per-run metrics; exact ties go to the lowest
// index and set tie. Throws DataError on an empty list or a missing metric.
Selection SelectModel(std::span<const TrainReport> runs, SelectionCriterion criterion);

}  // namespace mpd

#endif  // MPD_TRAINING_H_
