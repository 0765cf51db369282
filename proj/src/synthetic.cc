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

#include "mpd/synthetic.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>

#include "json.hpp"
#include "mpd/error.h"
#include "mpd/jsonl.h"

namespace mpd {

namespace {

// Box-Muller, so draws do not depend on the standard library's distributions.
double Gaussian(CounterRng& rng) {
  const double u1 = 1.0 - rng.Uniform();  // (0, 1]
  const double u2 = rng.Uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::vector<double> GaussianVector(std::size_t k, CounterRng& rng) {
  std::vector<double> v(k);
  for (double& x : v) x = Gaussian(rng);
  return v;
}

std::string Name(const char* prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%02zu", prefix, i);
  return buf;
}

}  // namespace

SyntheticBenchmark MakeSynthetic(const SyntheticOptions& o, std::uint64_t seed) {
  if (o.k == 0 || o.wordforms == 0 || o.min_senses == 0 || o.min_senses > o.max_senses) {
    throw ConfigError("invalid synthetic options");
  }
  const CounterRng root(seed);
  CounterRng structure = root.Split("structure");
  CounterRng vectors = root.Split("vectors");

  // Lexicon: wordform wNN with definitions wNN.n.MM; a fraction of the
  // definitions point at a hypernym among the earlier ones.
  std::vector<DefinitionRecord> records;
  for (std::size_t w = 0; w < o.wordforms; ++w) {
    const std::string wordform = Name("w", w);
    const std::size_t n = o.min_senses + structure.Below(o.max_senses - o.min_senses + 1);
    for (std::size_t d = 0; d < n; ++d) {
      DefinitionRecord r;
      r.id = wordform + ".n." + Name("", d + 1);
      r.gloss = "synthetic sense " + std::to_string(d + 1) + " of " + wordform;
      r.pos = "n";
      r.lemmas = {wordform};
      if (!records.empty() && structure.Bernoulli(o.hypernym_rate)) {
        r.hypernyms = {records[structure.Below(records.size())].id};
      }
      records.push_back(std::move(r));
    }
  }

  SyntheticBenchmark b;
  b.lexicon = Lexicon::FromRecords(records);
  b.store = EmbeddingStore(o.k);
  for (const auto& [wordform, defs] : b.lexicon.wordform_index()) {
    b.store.Put(Namespace::kType, wordform, std::span<const double>(GaussianVector(o.k, vectors)));
  }
  std::map<std::string, std::vector<double>> synset;
  for (const DefinitionRecord& r : b.lexicon.definitions()) {
    synset[r.id] = GaussianVector(o.k, vectors);
    b.store.Put(Namespace::kSynset, r.id, std::span<const double>(synset[r.id]));
  }

  // Planted labels.
  b.planted = InitMlp(MlpConfig{2 * o.k, 1, o.planted_layers, o.planted_hidden, 0.0},
                      root.Split("planted"));
  b.senses = b.lexicon.senses();
  for (const Sense& s : b.senses) {
    std::vector<double> in(2 * o.k);
    b.store.GetInto(Namespace::kType, s.wordform, std::span(in).first(o.k));
    b.store.GetInto(Namespace::kSynset, s.definition_id, std::span(in).last(o.k));
    b.planted_logit.push_back(MlpForward(b.planted, in, false, nullptr).output[0]);
  }
  std::vector<double> sorted = b.planted_logit;
  std::sort(sorted.begin(), sorted.end());
  const double median = sorted.size() % 2 == 1
                            ? sorted[sorted.size() / 2]
                            : 0.5 * (sorted[sorted.size() / 2 - 1] + sorted[sorted.size() / 2]);
  std::map<Sense, int> label;
  for (std::size_t i = 0; i < b.senses.size(); ++i) {
    b.planted_label.push_back(b.planted_logit[i] > median ? 1 : 0);
    label[b.senses[i]] = b.planted_label.back();
  }

  // Tokens. Each corpus split draws from its own stream.
  const std::vector<std::string> wordforms = [&] {
    std::vector<std::string> v;
    for (const auto& [w, d] : b.lexicon.wordform_index()) v.push_back(w);
    return v;
  }();
  auto make_token = [&](CounterRng& rng, const std::string& corpus, std::size_t i,
                        Sense& gold) {
    const std::string& w = wordforms[rng.Below(wordforms.size())];
    const auto& defs = b.lexicon.DefinitionsFor(w);
    const std::string& drawn = defs[rng.Below(defs.size())];
    std::vector<double> t = synset[drawn];
    for (double& x : t) x += o.token_noise * Gaussian(rng);
    double best = std::numeric_limits<double>::infinity();
    for (const std::string& d : defs) {
      double dist = 0.0;
      for (std::size_t j = 0; j < o.k; ++j) dist += (t[j] - synset[d][j]) * (t[j] - synset[d][j]);
      if (dist < best) {
        best = dist;
        gold = Sense{w, d};
      }
    }
    Token tok;
    tok.corpus_id = corpus;
    tok.doc_id = Name("d", i / 50);
    tok.sent_id = Name("s", i);
    tok.sentence = {"the", w, "here"};
    tok.index = 1;
    b.store.Put(Namespace::kToken, TokenKey(tok), std::span<const double>(t));
    b.store.Put(Namespace::kSent, SentKey(tok), std::span<const double>(GaussianVector(o.k, rng)));
    return tok;
  };
  auto smd = [&](const char* name, std::size_t n) {
    CounterRng rng = root.Split(name);
    std::vector<SmdExample> out;
    for (std::size_t i = 0; i < n; ++i) {
      Sense gold;
      Token t = make_token(rng, name, i, gold);
      out.push_back({std::move(t), label.at(gold), std::nullopt});
    }
    return out;
  };
  auto wsd = [&](const char* name, std::size_t n) {
    CounterRng rng = root.Split(name);
    std::vector<WsdExample> out;
    for (std::size_t i = 0; i < n; ++i) {
      Sense gold;
      Token t = make_token(rng, name, i, gold);
      out.push_back({std::move(t), std::move(gold)});
    }
    return out;
  };
  b.smd_train = smd("smd_train", o.smd_train);
  b.smd_dev = smd("smd_dev", o.smd_dev);
  b.smd_test = smd("smd_test", o.smd_test);
  b.wsd_train = wsd("wsd_train", o.wsd_train);
  b.wsd_dev = wsd("wsd_dev", o.wsd_dev);
  b.wsd_test = wsd("wsd_test", o.wsd_test);
  return b;
}

void WriteSynthetic(const SyntheticBenchmark& b, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  auto path = [&](const char* name) { return (fs::path(dir) / name).string(); };
  WriteFile(path("lexicon.jsonl"), b.lexicon.Serialize());
  WriteStore(b.store, path("store.mlex"));
  WriteFile(path("smd_train.jsonl"), SerializeSmdCorpus(b.smd_train));
  WriteFile(path("smd_dev.jsonl"), SerializeSmdCorpus(b.smd_dev));
  WriteFile(path("smd_test.jsonl"), SerializeSmdCorpus(b.smd_test));
  WriteFile(path("wsd_train.jsonl"), SerializeWsdCorpus(b.wsd_train));
  WriteFile(path("wsd_dev.jsonl"), SerializeWsdCorpus(b.wsd_dev));
  WriteFile(path("wsd_test.jsonl"), SerializeWsdCorpus(b.wsd_test));
  std::string planted;
  for (std::size_t i = 0; i < b.senses.size(); ++i) {
    nlohmann::json j = {{"wordform", b.senses[i].wordform},
                        {"definition", b.senses[i].definition_id},
                        {"score", 1.0 / (1.0 + std::exp(-b.planted_logit[i]))},
                        {"gold", b.planted_label[i]}};
    planted += j.dump() + "\n";
  }
  WriteFile(path("planted.jsonl"), planted);
}

}  // namespace mpd
