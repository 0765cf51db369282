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

#ifndef MPD_BUNDLE_H_
#define MPD_BUNDLE_H_

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "mpd/checkpoint.h"
#include "mpd/models.h"

namespace mpd {

enum class ModelKind { kMpd, kWsdBaseline, kEwiser, kSmdBaseline, kMelbert, kCombined };

std::string_view ModelKindName(ModelKind kind);
ModelKind ParseModelKind(std::string_view name);

// Architecture of a trainable system. Following the hyperparameter naming of
// the combined model: theta is the MPD network, phi the WSD network. The SMD
// baseline uses phi; MelBERT uses phi for its SPV branch and theta for MIP.
struct ModelSpec {
  ModelKind kind = ModelKind::kCombined;
  WsdKind wsd = WsdKind::kBaseline;  // combined only
  std::size_t k = 0;
  ArchConfig theta{1, 300};
  ArchConfig phi{1, 300};
  double dropout = 0.1;

  nlohmann::json ToJson() const;
  static ModelSpec FromJson(const nlohmann::json& j);
};

enum class ParamGroup { kTheta, kPhi, kPsi };

// The models a checkpoint carries. A combined bundle holds mpd and wsd; WSD
// kinds hold wsd; SMD kinds hold smd; an mpd bundle holds mpd alone.
struct ModelBundle {
  ModelSpec spec;
  std::optional<MpdModel> mpd;
  std::optional<WsdModel> wsd;
  std::optional<SmdModel> smd;

  std::vector<ParamRef> Params(ParamGroup group);
  std::vector<ParamRef> AllParams();
};

// Fresh parameters. EWISER's frozen matrices come from the store and lexicon.
ModelBundle BuildBundle(const ModelSpec& spec, const EmbeddingStore& store,
                        const Lexicon& lexicon, CounterRng rng);

Checkpoint BundleToCheckpoint(ModelBundle& bundle);
// Throws DimensionError when the store's k differs from the checkpoint's,
// DataError when the lexicon does not match the WSD output layer.
ModelBundle BundleFromCheckpoint(const Checkpoint& checkpoint, const EmbeddingStore& store,
                                 const Lexicon& lexicon);

}  // namespace mpd

#endif  // MPD_BUNDLE_H_
