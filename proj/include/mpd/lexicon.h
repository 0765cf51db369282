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

#ifndef MPD_LEXICON_H_
#define MPD_LEXICON_H_

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mpd/matrix.h"

namespace mpd {

struct DefinitionRecord {
  std::string id;
  std::string gloss;
  std::string pos;
  std::vector<std::string> lemmas;
  std::vector<std::string> hypernyms;

  friend bool operator==(const DefinitionRecord&, const DefinitionRecord&) = default;
};

// A wordform paired with one of its definitions.
struct Sense {
  std::string wordform;
  std::string definition_id;

  friend auto operator<=>(const Sense&, const Sense&) = default;
};

// Immutable sense inventory. Definitions are ordered lexicographically by id;
// every wordform index list follows that order. Wordforms are lowercased
// lemmas, multi-word lemmas kept verbatim.
class Lexicon {
 public:
  // Validates and indexes records. Throws DataError on duplicate ids,
  // dangling hypernyms or empty lemma lists.
  static Lexicon FromRecords(std::vector<DefinitionRecord> records);

  std::size_t num_definitions() const { return definitions_.size(); }
  const std::vector<DefinitionRecord>& definitions() const { return definitions_; }
  const DefinitionRecord* Find(std::string_view id) const;
  // Position of a definition in the fixed ordering.
  std::optional<std::size_t> DefinitionIndex(std::string_view id) const;

  // Definition ids for a wordform (lowercased before lookup); empty when the
  // wordform is not indexed.
  const std::vector<std::string>& DefinitionsFor(std::string_view wordform) const;
  bool Contains(std::string_view wordform) const;
  const std::map<std::string, std::vector<std::string>, std::less<>>& wordform_index() const {
    return index_;
  }

  // Every sense in a fixed enumeration: wordforms in lexicographic order,
  // then their definitions in index order.
  const std::vector<Sense>& senses() const { return senses_; }
  std::optional<std::size_t> SenseIndex(const Sense& sense) const;
  std::size_t num_senses() const { return senses_.size(); }

  // Canonical JSONL serialisation; equal lexicons serialise identically.
  std::string Serialize() const;

 private:
  std::vector<DefinitionRecord> definitions_;
  std::map<std::string, std::size_t, std::less<>> definition_pos_;
  std::map<std::string, std::vector<std::string>, std::less<>> index_;
  std::vector<Sense> senses_;
  std::map<Sense, std::size_t> sense_pos_;
};

std::string Lowercase(std::string_view s);

Lexicon LoadLexicon(const std::string& path);
Lexicon ParseLexicon(std::string_view jsonl, const std::string& source = "<memory>");

std::vector<Sense> CandidateSenses(const Lexicon& lexicon, std::string_view wordform);

// 0/1 matrix over the lexicon's definition ordering: entry (i, j) is 1 iff
// definition j is a hypernym of definition i.
struct HypernymAdjacency {
  std::vector<std::string> order;
  Matrix matrix;
};
HypernymAdjacency BuildHypernymAdjacency(const Lexicon& lexicon);

}  // namespace mpd

#endif  // MPD_LEXICON_H_
