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

#include "mpd/lexicon.h"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "mpd/error.h"
#include "mpd/jsonl.h"

namespace mpd {

using nlohmann::json;

std::string Lowercase(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

Lexicon Lexicon::FromRecords(std::vector<DefinitionRecord> records) {
  Lexicon lex;
  std::sort(records.begin(), records.end(),
            [](const auto& a, const auto& b) { return a.id < b.id; });
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].lemmas.empty()) {
      throw DataError("definition '" + records[i].id + "' has no lemmas");
    }
    if (!lex.definition_pos_.emplace(records[i].id, i).second) {
      throw DataError("duplicate definition id '" + records[i].id + "'");
    }
  }
  for (auto& rec : records) {
    std::set<std::string> unique_hypernyms;
    std::erase_if(rec.hypernyms,
                  [&](const std::string& h) { return !unique_hypernyms.insert(h).second; });
    for (const auto& h : rec.hypernyms) {
      if (!lex.definition_pos_.contains(h)) {
        throw DataError("definition '" + rec.id + "' cites unknown hypernym '" + h + "'");
      }
    }
    std::set<std::string> seen;
    for (const auto& lemma : rec.lemmas) {
      std::string w = Lowercase(lemma);
      if (seen.insert(w).second) lex.index_[w].push_back(rec.id);
    }
  }
  // Records are visited in id order, so each index list is already sorted.
  for (const auto& [w, defs] : lex.index_) {
    for (const auto& d : defs) {
      lex.sense_pos_.emplace(Sense{w, d}, lex.senses_.size());
      lex.senses_.push_back(Sense{w, d});
    }
  }
  lex.definitions_ = std::move(records);
  return lex;
}

const DefinitionRecord* Lexicon::Find(std::string_view id) const {
  auto it = definition_pos_.find(id);
  return it == definition_pos_.end() ? nullptr : &definitions_[it->second];
}

std::optional<std::size_t> Lexicon::DefinitionIndex(std::string_view id) const {
  auto it = definition_pos_.find(id);
  if (it == definition_pos_.end()) return std::nullopt;
  return it->second;
}

const std::vector<std::string>& Lexicon::DefinitionsFor(std::string_view wordform) const {
  static const std::vector<std::string> kEmpty;
  auto it = index_.find(Lowercase(wordform));
  return it == index_.end() ? kEmpty : it->second;
}

bool Lexicon::Contains(std::string_view wordform) const {
  return index_.contains(Lowercase(wordform));
}

std::optional<std::size_t> Lexicon::SenseIndex(const Sense& sense) const {
  auto it = sense_pos_.find(sense);
  if (it == sense_pos_.end()) return std::nullopt;
  return it->second;
}

std::string Lexicon::Serialize() const {
  std::string out;
  for (const auto& rec : definitions_) {
    json j = {{"id", rec.id},
              {"gloss", rec.gloss},
              {"pos", rec.pos},
              {"lemmas", rec.lemmas},
              {"hypernyms", rec.hypernyms}};
    out += j.dump();
    out += '\n';
  }
  return out;
}

Lexicon ParseLexicon(std::string_view jsonl, const std::string& source) {
  std::vector<DefinitionRecord> records;
  ForEachJsonLine(jsonl, source, [&](const json& j, std::size_t line) {
    DefinitionRecord rec;
    try {
      rec.id = j.at("id").get<std::string>();
      rec.gloss = j.value("gloss", std::string());
      rec.pos = j.value("pos", std::string());
      rec.lemmas = j.at("lemmas").get<std::vector<std::string>>();
      if (j.contains("hypernyms")) rec.hypernyms = j.at("hypernyms").get<std::vector<std::string>>();
    } catch (const json::exception& e) {
      throw ParseError(source, line, e.what());
    }
    if (rec.lemmas.empty()) throw ParseError(source, line, "empty lemma list");
    records.push_back(std::move(rec));
  });
  return Lexicon::FromRecords(std::move(records));
}

Lexicon LoadLexicon(const std::string& path) { return ParseLexicon(ReadFile(path), path); }

std::vector<Sense> CandidateSenses(const Lexicon& lexicon, std::string_view wordform) {
  std::vector<Sense> out;
  const std::string w = Lowercase(wordform);
  for (const auto& d : lexicon.DefinitionsFor(w)) out.push_back(Sense{w, d});
  return out;
}

HypernymAdjacency BuildHypernymAdjacency(const Lexicon& lexicon) {
  const std::size_t n = lexicon.num_definitions();
  HypernymAdjacency adj{{}, Matrix(n, n)};
  adj.order.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& rec = lexicon.definitions()[i];
    adj.order.push_back(rec.id);
    for (const auto& h : rec.hypernyms) adj.matrix(i, *lexicon.DefinitionIndex(h)) = 1.0;
  }
  return adj;
}

}  // namespace mpd
