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

#include "mpd/corpora.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "json.hpp"
#include "mpd/error.h"
#include "mpd/jsonl.h"
#include "mpd/rng.h"

namespace mpd {

using nlohmann::json;

std::string Token::wordform() const { return Lowercase(sentence.at(index)); }

std::vector<std::string> Token::prefix() const {
  return {sentence.begin(), sentence.begin() + static_cast<std::ptrdiff_t>(index)};
}

std::vector<std::string> Token::suffix() const {
  return {sentence.begin() + static_cast<std::ptrdiff_t>(index) + 1, sentence.end()};
}

namespace {

Token ParseToken(const json& j, const std::string& source, std::size_t line) {
  Token t;
  try {
    t.corpus_id = j.at("corpus").get<std::string>();
    t.doc_id = j.at("doc").get<std::string>();
    t.sent_id = j.at("sent").get<std::string>();
    t.sentence = j.at("tokens").get<std::vector<std::string>>();
    const auto index = j.at("index").get<long long>();
    if (index < 0 || static_cast<std::size_t>(index) >= t.sentence.size()) {
      throw ParseError(source, line,
                       "index " + std::to_string(index) + " outside sentence of length " +
                           std::to_string(t.sentence.size()));
    }
    t.index = static_cast<std::size_t>(index);
  } catch (const json::exception& e) {
    throw ParseError(source, line, e.what());
  }
  return t;
}

json TokenJson(const Token& t) {
  return {{"corpus", t.corpus_id},
          {"doc", t.doc_id},
          {"sent", t.sent_id},
          {"tokens", t.sentence},
          {"index", t.index}};
}

}  // namespace

std::vector<WsdExample> ParseWsdCorpus(std::string_view jsonl, const std::string& source,
                                       const Lexicon* lexicon) {
  std::vector<WsdExample> out;
  ForEachJsonLine(jsonl, source, [&](const json& j, std::size_t line) {
    WsdExample ex;
    ex.token = ParseToken(j, source, line);
    try {
      ex.gold.definition_id = j.at("gold_definition").get<std::string>();
      ex.gold.wordform = ex.token.wordform();
      if (j.contains("gold_wordform") &&
          Lowercase(j.at("gold_wordform").get<std::string>()) != ex.gold.wordform) {
        throw ParseError(source, line,
                         "gold wordform '" + j.at("gold_wordform").get<std::string>() +
                             "' does not match token '" + ex.token.sentence[ex.token.index] +
                             "'");
      }
    } catch (const json::exception& e) {
      throw ParseError(source, line, e.what());
    }
    if (lexicon != nullptr) {
      const auto& defs = lexicon->DefinitionsFor(ex.gold.wordform);
      if (std::find(defs.begin(), defs.end(), ex.gold.definition_id) == defs.end()) {
        throw ParseError(source, line,
                         "gold sense <" + ex.gold.wordform + ", " + ex.gold.definition_id +
                             "> is not a candidate sense in the lexicon");
      }
    }
    out.push_back(std::move(ex));
  });
  return out;
}

std::vector<SmdExample> ParseSmdCorpus(std::string_view jsonl, const std::string& source) {
  std::vector<SmdExample> out;
  ForEachJsonLine(jsonl, source, [&](const json& j, std::size_t line) {
    SmdExample ex;
    ex.token = ParseToken(j, source, line);
    try {
      const auto label = j.at("label").get<long long>();
      if (label != 0 && label != 1) {
        throw ParseError(source, line, "label must be 0 or 1, got " + std::to_string(label));
      }
      ex.label = static_cast<int>(label);
      if (j.contains("novelty") && !j.at("novelty").is_null()) {
        const double nov = j.at("novelty").get<double>();
        if (!(nov >= -1.0 && nov <= 1.0)) {
          throw ParseError(source, line, "novelty outside [-1, 1]");
        }
        ex.novelty = nov;
      }
    } catch (const json::exception& e) {
      throw ParseError(source, line, e.what());
    }
    out.push_back(std::move(ex));
  });
  return out;
}

std::vector<WsdExample> LoadWsdCorpus(const std::string& path, const Lexicon* lexicon) {
  return ParseWsdCorpus(ReadFile(path), path, lexicon);
}

std::vector<SmdExample> LoadSmdCorpus(const std::string& path) {
  return ParseSmdCorpus(ReadFile(path), path);
}

std::string SerializeWsdCorpus(const std::vector<WsdExample>& examples) {
  std::string out;
  for (const auto& ex : examples) {
    json j = TokenJson(ex.token);
    j["gold_definition"] = ex.gold.definition_id;
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::string SerializeSmdCorpus(const std::vector<SmdExample>& examples) {
  std::string out;
  for (const auto& ex : examples) {
    json j = TokenJson(ex.token);
    j["label"] = ex.label;
    j["novelty"] = ex.novelty ? json(*ex.novelty) : json(nullptr);
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::vector<WsdExample> FilterTrivialWsd(const std::vector<WsdExample>& examples,
                                         const Lexicon& lexicon) {
  std::vector<WsdExample> out;
  for (const auto& ex : examples) {
    if (lexicon.DefinitionsFor(ex.token.wordform()).size() >= 2) out.push_back(ex);
  }
  return out;
}

std::vector<SmdExample> FilterSmd(const std::vector<SmdExample>& examples,
                                  const Lexicon& lexicon, bool conventional_only,
                                  double novelty_threshold) {
  if (!(novelty_threshold >= -1.0 && novelty_threshold <= 1.0)) {
    throw ConfigError("novelty threshold must lie in [-1, 1]");
  }
  std::vector<SmdExample> out;
  for (const auto& ex : examples) {
    if (!lexicon.Contains(ex.token.wordform())) continue;
    if (conventional_only && ex.label == 1 && ex.novelty && *ex.novelty > novelty_threshold) {
      continue;
    }
    out.push_back(ex);
  }
  return out;
}

Splits<std::size_t> SplitIndices(std::size_t n, std::array<double, 3> ratios,
                                 std::uint64_t seed) {
  double total = 0.0;
  for (double r : ratios) {
    if (!(r >= 0.0)) throw ConfigError("split ratios must be nonnegative");
    total += r;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw ConfigError("split ratios must sum to 1, got " + std::to_string(total));
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  CounterRng rng = CounterRng(seed).Split("split");
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.Below(i)]);

  const double dn = static_cast<double>(n);
  const auto dev_n = static_cast<std::size_t>(std::floor(dn * ratios[1] + 1e-9));
  const auto test_n = static_cast<std::size_t>(std::floor(dn * ratios[2] + 1e-9));
  const std::size_t train_n = n - dev_n - test_n;

  Splits<std::size_t> out;
  out.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(train_n));
  out.dev.assign(order.begin() + static_cast<std::ptrdiff_t>(train_n),
                 order.begin() + static_cast<std::ptrdiff_t>(train_n + dev_n));
  out.test.assign(order.begin() + static_cast<std::ptrdiff_t>(train_n + dev_n), order.end());
  return out;
}

}  // namespace mpd
