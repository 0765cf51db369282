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

#ifndef MPD_CORPORA_H_
#define MPD_CORPORA_H_

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mpd/lexicon.h"

namespace mpd {

// A wordform occurrence: sentence[index] with everything before it as prefix
// and everything after as suffix.
struct Token {
  std::string corpus_id;
  std::string doc_id;
  std::string sent_id;
  std::vector<std::string> sentence;
  std::size_t index = 0;

  // The target wordform, lowercased.
  std::string wordform() const;
  std::vector<std::string> prefix() const;
  std::vector<std::string> suffix() const;

  friend bool operator==(const Token&, const Token&) = default;
};

struct WsdExample {
  Token token;
  Sense gold;

  friend bool operator==(const WsdExample&, const WsdExample&) = default;
};

struct SmdExample {
  Token token;
  int label = 0;
  std::optional<double> novelty;

  friend bool operator==(const SmdExample&, const SmdExample&) = default;
};

// Parsers check the per-record invariants; a WSD gold definition is resolved
// against the lexicon when one is given.
std::vector<WsdExample> ParseWsdCorpus(std::string_view jsonl, const std::string& source,
                                       const Lexicon* lexicon = nullptr);
std::vector<SmdExample> ParseSmdCorpus(std::string_view jsonl, const std::string& source);
std::vector<WsdExample> LoadWsdCorpus(const std::string& path, const Lexicon* lexicon = nullptr);
std::vector<SmdExample> LoadSmdCorpus(const std::string& path);

std::string SerializeWsdCorpus(const std::vector<WsdExample>& examples);
std::string SerializeSmdCorpus(const std::vector<SmdExample>& examples);

// Keeps examples whose wordform has at least two candidate definitions.
std::vector<WsdExample> FilterTrivialWsd(const std::vector<WsdExample>& examples,
                                         const Lexicon& lexicon);

inline constexpr double kDefaultNoveltyThreshold = 0.2;

// Drops wordforms missing from the lexicon and, with conventional_only,
// metaphors whose novelty exceeds the threshold.
std::vector<SmdExample> FilterSmd(const std::vector<SmdExample>& examples,
                                  const Lexicon& lexicon, bool conventional_only,
                                  double novelty_threshold = kDefaultNoveltyThreshold);

template <class T>
struct Splits {
  std::vector<T> train;
  std::vector<T> dev;
  std::vector<T> test;
};

// Shuffles with the seed, then cuts dev and test to floor(n * ratio); the
// remainder goes to train. Ratios must sum to 1 within 1e-9.
template <class T>
Splits<T> Split(const std::vector<T>& examples, std::array<double, 3> ratios,
                std::uint64_t seed);

// Index-level split used by Split; exposed for testing the partition.
Splits<std::size_t> SplitIndices(std::size_t n, std::array<double, 3> ratios,
                                 std::uint64_t seed);

template <class T>
Splits<T> Split(const std::vector<T>& examples, std::array<double, 3> ratios,
                std::uint64_t seed) {
  Splits<std::size_t> idx = SplitIndices(examples.size(), ratios, seed);
  Splits<T> out;
  for (std::size_t i : idx.train) out.train.push_back(examples[i]);
  for (std::size_t i : idx.dev) out.dev.push_back(examples[i]);
  for (std::size_t i : idx.test) out.test.push_back(examples[i]);
  return out;
}

}  // namespace mpd

#endif  // MPD_CORPORA_H_
