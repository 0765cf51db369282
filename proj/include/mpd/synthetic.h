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

#ifndef MPD_SYNTHETIC_H_
#define MPD_SYNTHETIC_H_

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "mpd/corpora.h"
#include "mpd/embed_store.h"
#include "mpd/lexicon.h"
#include "mpd/mlp.h"
#include "mpd/training.h"

namespace mpd {

// Planted benchmark. Sense metaphoricity comes from a hidden random MLP over
// TYPE ∘ SYNSET, thresholded at the median logit. A token of sense s gets
// SYNSET(s) plus Gaussian noise as its TOKEN vector; its WSD gold is the
// candidate whose SYNSET vector is nearest, and its SMD label is that
// sense's planted label.
struct SyntheticOptions {
  std::size_t k = 8;
  std::size_t wordforms = 40;
  std::size_t min_senses = 2;
  std::size_t max_senses = 5;
  std::size_t smd_train = 2000;
  std::size_t wsd_train = 2000;
  std::size_t smd_dev = 400;
  std::size_t wsd_dev = 400;
  std::size_t smd_test = 400;
  std::size_t wsd_test = 400;
  double token_noise = 0.3;
  std::size_t planted_layers = 2;
  std::size_t planted_hidden = 16;
  double hypernym_rate = 0.3;
};

struct SyntheticBenchmark {
  Lexicon lexicon;
  EmbeddingStore store{1};
  MlpParams planted;
  std::vector<Sense> senses;         // lexicon.senses()
  std::vector<double> planted_logit;  // per sense
  std::vector<int> planted_label;     // per sense
  std::vector<SmdExample> smd_train, smd_dev, smd_test;
  std::vector<WsdExample> wsd_train, wsd_dev, wsd_test;

  TrainData Data() const { return {smd_train, smd_dev, wsd_train, wsd_dev}; }
};

SyntheticBenchmark MakeSynthetic(const SyntheticOptions& options, std::uint64_t seed);

// Writes lexicon.jsonl, store.mlex, {smd,wsd}_{train,dev,test}.jsonl and
// planted.jsonl (scored-sense records holding the planted labels) into dir.
void WriteSynthetic(const SyntheticBenchmark& bench, const std::string& dir);

}  // namespace mpd

#endif  // MPD_SYNTHETIC_H_
