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

#include "mpd/cli.h"

#include <openssl/evp.h>

#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "mpd/bundle.h"
#include "mpd/checkpoint.h"
#include "mpd/config.h"
#include "mpd/corpora.h"
#include "mpd/embed_store.h"
#include "mpd/error.h"
#include "mpd/evaluation.h"
#include "mpd/jsonl.h"
#include "mpd/lexicon.h"
#include "mpd/models.h"
#include "mpd/synthetic.h"
#include "mpd/training.h"

#ifndef MPD_VERSION
#define MPD_VERSION "0.0.0"
#endif

namespace mpd::cli {

namespace fs = std::filesystem;
using nlohmann::json;

std::string Sha256Hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw RuntimeError("sha256 failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += kHex[digest[i] >> 4];
    out += kHex[digest[i] & 0xf];
  }
  return out;
}

std::string ManifestPath(const std::string& output, bool is_directory) {
  if (is_directory) return (fs::path(output) / "manifest.json").string();
  return fs::path(output).replace_extension(".manifest.json").string();
}

namespace {

class UsageError : public Error {
 public:
  using Error::Error;
};

constexpr const char* kGridHelp =
    "Default search grid (search subcommand), sampled uniformly per alpha:\n"
    "  n (layers, n_phi and n_theta)   {1, 2, 3, 4}\n"
    "  h (hidden, h_phi and h_theta)   {100, 300, 500}\n"
    "  x (dropout)                     {0.1, 0.2, 0.3, 0.4}\n"
    "  lr (learning rate)              {0.005, 0.001, 0.0005, 0.0001}\n"
    "  lr_divisor                      {1, 10}\n"
    "  alpha                           {0.0, 0.2, 0.4, 0.6, 0.8, 1.0}\n"
    "With 20 samples per alpha value this is 120 training runs.\n"
    "Exit codes: 0 success, 1 usage error, 2 data or format error, 3 runtime error.";

void WriteJson(const std::string& path, const json& j) { WriteFile(path, j.dump(2) + "\n"); }

std::string SiblingPath(const std::string& output, const char* ext) {
  return fs::path(output).replace_extension(ext).string();
}

struct Manifest {
  std::string subcommand;
  json config = json::object();
  std::vector<std::string> inputs;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> outputs;
  json notes = json::object();

  void Write(const std::string& path) const {
    json digests = json::object();
    for (const std::string& p : inputs) digests[p] = Sha256Hex(ReadFile(p));
    json j = {{"subcommand", subcommand},
              {"tool_version", MPD_VERSION},
              {"seed", seed ? json(*seed) : json(nullptr)},
              {"config", config},
              {"inputs", digests},
              {"outputs", outputs}};
    if (!notes.empty()) j["notes"] = notes;
    WriteJson(path, j);
  }
};

// ---------------------------------------------------------------------------
// Shared flags

struct DataFlags {
  std::string lexicon, store, smd_train, smd_dev, wsd_train, wsd_dev;
};

void AddDataFlags(CLI::App* app, DataFlags& f) {
  app->add_option("--lexicon", f.lexicon, "Lexicon JSONL")->required();
  app->add_option("--store", f.store, "Embedding store (MLEX)")->required();
  app->add_option("--smd-train", f.smd_train, "SMD training corpus JSONL");
  app->add_option("--smd-dev", f.smd_dev, "SMD development corpus JSONL");
  app->add_option("--wsd-train", f.wsd_train, "WSD training corpus JSONL");
  app->add_option("--wsd-dev", f.wsd_dev, "WSD development corpus JSONL");
}

struct LoadedData {
  Lexicon lexicon;
  EmbeddingStore store{1};
  std::vector<SmdExample> smd_train, smd_dev;
  std::vector<WsdExample> wsd_train, wsd_dev;
  std::vector<std::string> inputs;

  TrainData View() const { return {smd_train, smd_dev, wsd_train, wsd_dev}; }
};

LoadedData Load(const DataFlags& f) {
  LoadedData d;
  d.lexicon = LoadLexicon(f.lexicon);
  d.store = OpenStore(f.store);
  d.inputs = {f.lexicon, f.store};
  auto smd = [&](const std::string& p, std::vector<SmdExample>& out) {
    if (p.empty()) return;
    out = LoadSmdCorpus(p);
    d.inputs.push_back(p);
  };
  auto wsd = [&](const std::string& p, std::vector<WsdExample>& out) {
    if (p.empty()) return;
    out = LoadWsdCorpus(p, &d.lexicon);
    d.inputs.push_back(p);
  };
  smd(f.smd_train, d.smd_train);
  smd(f.smd_dev, d.smd_dev);
  wsd(f.wsd_train, d.wsd_train);
  wsd(f.wsd_dev, d.wsd_dev);
  return d;
}

// Every TrainConfig key is also a flag; flag > config file > default.
struct ConfigFlags {
  std::string file;
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> options;
};

void AddConfigFlags(CLI::App* app, ConfigFlags& f) {
  app->add_option("--config", f.file, "Flat key = value training config");
  for (const std::string& key : TrainConfig::Keys()) {
    if (key == "seed") continue;
    f.options[key] = app->add_option("--" + key, f.values[key], "Config key '" + key + "'");
  }
}

TrainConfig Resolve(const ConfigFlags& f, std::uint64_t seed, json& echo,
                    std::vector<std::string>& inputs) {
  TrainConfig c;
  json sources = json::object();
  for (const std::string& key : TrainConfig::Keys()) sources[key] = "default";
  try {
    if (!f.file.empty()) {
      for (const auto& [k, v] : LoadKeyValues(f.file)) {
        c.Set(k, v);
        sources[k] = "file";
      }
      inputs.push_back(f.file);
    }
    for (const auto& [key, opt] : f.options) {
      if (opt->count() == 0) continue;
      c.Set(key, f.values.at(key));
      sources[key] = "flag";
    }
    c.seed = seed;
    sources["seed"] = "flag";
    c.Validate();
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  }
  echo = {{"values", c.ToJson()}, {"sources", sources}};
  return c;
}

Checkpoint ToCheckpoint(TrainResult& r, const TrainConfig& c) {
  Checkpoint ck = BundleToCheckpoint(r.bundle);
  ck.config["train"] = c.ToJson();
  ck.step = r.report.steps;
  ck.phase = r.report.phase_transition_step ? 2 : 1;
  ck.rng = r.rng_state;
  return ck;
}

// ---------------------------------------------------------------------------
// Prediction file formats

std::vector<ScoredSense> ReadScoredSenses(const std::string& path, bool need_gold) {
  std::vector<ScoredSense> out;
  ForEachJsonLine(ReadFile(path), path, [&](const json& j, std::size_t line) {
    try {
      ScoredSense s;
      s.sense.wordform = Lowercase(j.at("wordform").get<std::string>());
      s.sense.definition_id = j.at("definition").get<std::string>();
      s.score = j.value("score", 0.0);
      if (need_gold || j.contains("gold")) {
        s.gold = j.at("gold").get<int>();
        if (s.gold != 0 && s.gold != 1) throw ParseError(path, line, "gold must be 0 or 1");
      }
      out.push_back(std::move(s));
    } catch (const json::exception& e) {
      throw ParseError(path, line, e.what());
    }
  });
  if (out.empty()) throw DataError(path + ": no records");
  return out;
}

struct KeyedRecords {
  std::vector<std::string> keys;
  std::vector<json> records;
};

KeyedRecords ReadKeyed(const std::string& path, std::initializer_list<const char*> fields) {
  KeyedRecords out;
  std::map<std::string, std::size_t> seen;
  ForEachJsonLine(ReadFile(path), path, [&](const json& j, std::size_t line) {
    try {
      std::string key = j.at("key").get<std::string>();
      for (const char* f : fields) {
        if (!j.contains(f)) throw ParseError(path, line, std::string("missing field '") + f + "'");
      }
      if (!seen.emplace(key, line).second) {
        throw ParseError(path, line, "duplicate key '" + key + "'");
      }
      out.keys.push_back(std::move(key));
      out.records.push_back(j);
    } catch (const json::exception& e) {
      throw ParseError(path, line, e.what());
    }
  });
  if (out.keys.empty()) throw DataError(path + ": no records");
  return out;
}

// Order of b's records matching a's keys.
std::vector<std::size_t> Align(const KeyedRecords& a, const KeyedRecords& b) {
  if (a.keys.size() != b.keys.size()) {
    throw DataError("prediction files are not aligned: " + std::to_string(a.keys.size()) +
                    " vs " + std::to_string(b.keys.size()) + " records");
  }
  std::map<std::string_view, std::size_t> pos;
  for (std::size_t i = 0; i < b.keys.size(); ++i) pos.emplace(b.keys[i], i);
  std::vector<std::size_t> out;
  for (const std::string& k : a.keys) {
    auto it = pos.find(k);
    if (it == pos.end()) throw DataError("prediction files are not aligned: key '" + k + "'");
    out.push_back(it->second);
  }
  return out;
}

std::string LabelString(const json& j) { return j.is_string() ? j.get<std::string>() : j.dump(); }

int GoldOf(const json& j, const std::string& path) {
  const int g = j.at("gold").get<int>();
  if (g != 0 && g != 1) throw DataError(path + ": gold must be 0 or 1");
  return g;
}

json AucJson(const RelativeAucResult& r) {
  json per = json::array();
  for (const WordformAuc& w : r.per_wordform) {
    per.push_back({{"wordform", w.wordform},
                   {"auc", w.auc},
                   {"metaphorical", w.positives},
                   {"literal", w.negatives}});
  }
  json excluded = json::array();
  for (const Exclusion& e : r.excluded) excluded.push_back({{"item", e.item}, {"reason", e.reason}});
  return {{"per_wordform", per}, {"excluded", excluded}};
}

// ---------------------------------------------------------------------------
// Subcommands

struct SynthFlags {
  std::string out;
  std::uint64_t seed = 0;
  SyntheticOptions options;
};

void DoSynth(const SynthFlags& f, std::ostream& out) {
  SyntheticBenchmark b = MakeSynthetic(f.options, f.seed);
  WriteSynthetic(b, f.out);
  Manifest m;
  m.subcommand = "synth";
  m.seed = f.seed;
  m.config = {{"k", f.options.k},
              {"wordforms", f.options.wordforms},
              {"smd_train", f.options.smd_train},
              {"wsd_train", f.options.wsd_train},
              {"token_noise", f.options.token_noise}};
  for (const char* name : {"lexicon.jsonl", "store.mlex", "smd_train.jsonl", "smd_dev.jsonl",
                           "smd_test.jsonl", "wsd_train.jsonl", "wsd_dev.jsonl", "wsd_test.jsonl",
                           "planted.jsonl"}) {
    m.outputs.push_back((fs::path(f.out) / name).string());
  }
  m.Write(ManifestPath(f.out, true));
  out << "wrote synthetic benchmark to " << f.out << " (" << b.senses.size() << " senses)\n";
}

struct IngestFlags {
  std::string lexicon, smd, wsd, out;
  std::uint64_t seed = 0;
  std::vector<double> ratios{0.8, 0.1, 0.1};
  bool conventional_only = false;
  double novelty_threshold = kDefaultNoveltyThreshold;
};

void DoIngest(const IngestFlags& f, std::ostream& out) {
  if (f.smd.empty() && f.wsd.empty()) throw UsageError("ingest needs --smd and/or --wsd");
  if (f.ratios.size() != 3) throw UsageError("--ratios takes three values");
  const std::array<double, 3> ratios{f.ratios[0], f.ratios[1], f.ratios[2]};
  const Lexicon lexicon = LoadLexicon(f.lexicon);
  fs::create_directories(f.out);
  Manifest m;
  m.subcommand = "ingest";
  m.seed = f.seed;
  m.inputs = {f.lexicon};
  m.config = {{"ratios", f.ratios},
              {"conventional_only", f.conventional_only},
              {"novelty_threshold", f.novelty_threshold}};
  auto path = [&](const std::string& name) { return (fs::path(f.out) / name).string(); };
  try {
    if (!f.smd.empty()) {
      const auto all = LoadSmdCorpus(f.smd);
      const auto kept = FilterSmd(all, lexicon, f.conventional_only, f.novelty_threshold);
      const auto s = Split(kept, ratios, f.seed);
      WriteFile(path("smd_train.jsonl"), SerializeSmdCorpus(s.train));
      WriteFile(path("smd_dev.jsonl"), SerializeSmdCorpus(s.dev));
      WriteFile(path("smd_test.jsonl"), SerializeSmdCorpus(s.test));
      m.inputs.push_back(f.smd);
      for (const char* n : {"smd_train.jsonl", "smd_dev.jsonl", "smd_test.jsonl"}) {
        m.outputs.push_back(path(n));
      }
      m.notes["smd"] = {{"read", all.size()},
                        {"kept", kept.size()},
                        {"split", {s.train.size(), s.dev.size(), s.test.size()}}};
    }
    if (!f.wsd.empty()) {
      const auto all = LoadWsdCorpus(f.wsd, &lexicon);
      const auto kept = FilterTrivialWsd(all, lexicon);
      const auto s = Split(kept, ratios, f.seed);
      WriteFile(path("wsd_train.jsonl"), SerializeWsdCorpus(s.train));
      WriteFile(path("wsd_dev.jsonl"), SerializeWsdCorpus(s.dev));
      WriteFile(path("wsd_test.jsonl"), SerializeWsdCorpus(s.test));
      m.inputs.push_back(f.wsd);
      for (const char* n : {"wsd_train.jsonl", "wsd_dev.jsonl", "wsd_test.jsonl"}) {
        m.outputs.push_back(path(n));
      }
      m.notes["wsd"] = {{"read", all.size()},
                        {"kept", kept.size()},
                        {"split", {s.train.size(), s.dev.size(), s.test.size()}}};
    }
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  }
  m.Write(ManifestPath(f.out, true));
  out << m.notes.dump() << "\n";
}

struct TrainFlags {
  DataFlags data;
  ConfigFlags config;
  std::string out;
  std::uint64_t seed = 0;
};

void DoTrain(const TrainFlags& f, std::ostream& out) {
  Manifest m;
  m.subcommand = "train";
  m.seed = f.seed;
  std::vector<std::string> config_inputs;
  const TrainConfig c = Resolve(f.config, f.seed, m.config, config_inputs);
  LoadedData d = Load(f.data);
  TrainResult r = Train(c, d.View(), d.store, d.lexicon);
  SaveCheckpoint(ToCheckpoint(r, c), f.out);
  const std::string report = SiblingPath(f.out, ".report.json");
  WriteJson(report, r.report.ToJson());
  m.inputs = d.inputs;
  m.inputs.insert(m.inputs.end(), config_inputs.begin(), config_inputs.end());
  m.outputs = {f.out, CheckpointDataPath(f.out), report};
  m.Write(ManifestPath(f.out, false));
  out << "trained " << ModelKindName(c.model) << " for " << r.report.steps << " steps ("
      << r.report.stop_reason << "); report " << report << "\n";
}

struct SearchFlags {
  DataFlags data;
  ConfigFlags config;
  std::string out;
  std::uint64_t seed = 0;
  std::size_t per_alpha = 20;
  std::size_t max_runs = 0;
  std::string criterion = "mean_smd_wsd";
};

void DoSearch(const SearchFlags& f, std::ostream& out) {
  Manifest m;
  m.subcommand = "search";
  m.seed = f.seed;
  std::vector<std::string> config_inputs;
  const TrainConfig base = Resolve(f.config, f.seed, m.config, config_inputs);
  SelectionCriterion criterion;
  try {
    criterion = ParseSelectionCriterion(f.criterion);
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  }
  const SearchSpace space;
  m.config["space"] = space.ToJson();
  m.config["per_alpha_samples"] = f.per_alpha;
  m.config["max_runs"] = f.max_runs;
  m.config["criterion"] = f.criterion;
  LoadedData d = Load(f.data);
  std::vector<SearchRun> runs =
      HyperparamSearch(space, f.per_alpha, base, f.seed, d.View(), d.store, d.lexicon, f.max_runs);
  std::vector<TrainReport> reports;
  json runs_json = json::array();
  for (const SearchRun& r : runs) {
    reports.push_back(r.report);
    runs_json.push_back({{"index", r.index}, {"report", r.report.ToJson()}});
  }
  const Selection sel = SelectModel(reports, criterion);
  fs::create_directories(f.out);
  const std::string runs_path = (fs::path(f.out) / "runs.json").string();
  WriteJson(runs_path, {{"criterion", f.criterion},
                        {"selected", sel.index},
                        {"selected_value", sel.value},
                        {"tie", sel.tie},
                        {"runs", runs_json}});
  // Retraining the selected config reproduces its run exactly.
  const TrainConfig& best = runs[sel.index].config;
  TrainResult r = Train(best, d.View(), d.store, d.lexicon);
  const std::string best_path = (fs::path(f.out) / "best.json").string();
  SaveCheckpoint(ToCheckpoint(r, best), best_path);
  m.inputs = d.inputs;
  m.inputs.insert(m.inputs.end(), config_inputs.begin(), config_inputs.end());
  m.outputs = {runs_path, best_path, CheckpointDataPath(best_path)};
  m.Write(ManifestPath(f.out, true));
  out << runs.size() << " runs; selected run " << sel.index << " (" << f.criterion << " = "
      << sel.value << (sel.tie ? ", tie" : "") << ")\n";
}

struct EvalFlags {
  std::string pred, a, b, lexicon, out;
  double threshold = kDefaultThreshold;
  std::size_t min_count = 2;
};

void WriteEval(const std::string& metric, const EvalFlags& f, json report,
               std::vector<std::string> inputs, std::ostream& out) {
  const std::string path =
      !f.out.empty() ? f.out : SiblingPath(f.pred.empty() ? f.a : f.pred, ("." + metric + ".eval.json").c_str());
  report["metric"] = metric;
  WriteJson(path, report);
  Manifest m;
  m.subcommand = "evaluate " + metric;
  m.inputs = std::move(inputs);
  m.config = {{"threshold", f.threshold}, {"min_count", f.min_count}};
  m.outputs = {path};
  m.Write(ManifestPath(path, false));
  out << report.dump(2) << "\n";
}

void DoEvaluate(const std::string& which, const EvalFlags& f, std::ostream& out) {
  if (which == "mpd") {
    std::optional<Lexicon> lexicon;
    std::vector<std::string> inputs{f.pred};
    if (!f.lexicon.empty()) {
      lexicon = LoadLexicon(f.lexicon);
      inputs.push_back(f.lexicon);
    }
    const auto items = ReadScoredSenses(f.pred, true);
    const RelativeAucResult auc = RelativeRocAuc(items, lexicon ? &*lexicon : nullptr);
    std::vector<double> scores;
    std::vector<int> golds;
    for (const ScoredSense& s : items) {
      scores.push_back(s.score);
      golds.push_back(s.gold);
    }
    json r = AucJson(auc);
    r["value"] = auc.mean;
    r["threshold"] = f.threshold;
    r["f1"] = F1Binary(scores, golds, f.threshold);
    r["counts"] = {{"input", items.size()},
                   {"included", auc.included_items},
                   {"excluded", auc.excluded_items}};
    WriteEval("relative_roc_auc", f, r, inputs, out);
  } else if (which == "smd") {
    const KeyedRecords recs = ReadKeyed(f.pred, {"score", "gold"});
    std::vector<double> scores;
    std::vector<int> golds;
    for (const json& j : recs.records) {
      scores.push_back(j.at("score").get<double>());
      golds.push_back(GoldOf(j, f.pred));
    }
    json r = {{"value", F1Binary(scores, golds, f.threshold)},
              {"threshold", f.threshold},
              {"excluded", json::array()},
              {"counts", {{"input", scores.size()}, {"included", scores.size()}, {"excluded", 0}}}};
    WriteEval("f1", f, r, {f.pred}, out);
  } else if (which == "wsd") {
    const KeyedRecords recs = ReadKeyed(f.pred, {"predicted", "gold"});
    std::vector<std::string> pred, gold;
    for (const json& j : recs.records) {
      pred.push_back(LabelString(j.at("predicted")));
      gold.push_back(LabelString(j.at("gold")));
    }
    json r = {{"value", MicroF1(pred, gold)},
              {"excluded", json::array()},
              {"counts", {{"input", pred.size()}, {"included", pred.size()}, {"excluded", 0}}}};
    WriteEval("micro_f1", f, r, {f.pred}, out);
  } else if (which == "consistency") {
    const KeyedRecords recs = ReadKeyed(f.pred, {"wordform", "definition", "score"});
    std::vector<Sense> senses;
    std::vector<double> scores;
    for (const json& j : recs.records) {
      senses.push_back({Lowercase(j.at("wordform").get<std::string>()),
                        j.at("definition").get<std::string>()});
      scores.push_back(j.at("score").get<double>());
    }
    const ConsistencyResult c = ConsistencyAnalysis(senses, scores, f.threshold, f.min_count);
    json detail = json::array();
    for (const SenseConsistency& s : c.detail) {
      detail.push_back({{"wordform", s.sense.wordform},
                        {"definition", s.sense.definition_id},
                        {"tokens", s.count},
                        {"predicted_metaphorical", s.predicted_metaphorical},
                        {"inconsistent", s.inconsistent}});
    }
    json r = {{"value", c.rate},
              {"threshold", f.threshold},
              {"min_count", f.min_count},
              {"considered", c.considered},
              {"inconsistent", c.inconsistent},
              {"per_sense", detail}};
    WriteEval("consistency", f, r, {f.pred}, out);
  } else {  // kappa
    const KeyedRecords a = ReadKeyed(f.a, {"label"});
    const KeyedRecords b = ReadKeyed(f.b, {"label"});
    const auto order = Align(a, b);
    std::vector<std::string> la, lb;
    for (std::size_t i = 0; i < order.size(); ++i) {
      la.push_back(LabelString(a.records[i].at("label")));
      lb.push_back(LabelString(b.records[order[i]].at("label")));
    }
    json r = {{"value", CohenKappa(la, lb)}, {"items", la.size()}};
    WriteEval("kappa", f, r, {f.a, f.b}, out);
  }
}

struct PredictFlags {
  std::string checkpoint, store, lexicon, out, smd, wsd, wsd_corpus;
  std::optional<std::string> senses;
  CLI::Option* senses_opt = nullptr;
  CLI::Option* seed_opt = nullptr;
  std::uint64_t seed = 0;
};

bool HasTokenVectors(const SmdModel* smd, const EmbeddingStore& store, const Token& t) {
  if (!store.Contains(Namespace::kToken, TokenKey(t))) return false;
  if (smd != nullptr && smd->kind == SmdKind::kMelbert) {
    return store.Contains(Namespace::kSent, SentKey(t)) &&
           store.Contains(Namespace::kType, t.wordform());
  }
  return true;
}

void DoPredict(const PredictFlags& f, std::ostream& out, std::ostream& err) {
  const int modes = (f.senses_opt->count() > 0) + !f.smd.empty() + !f.wsd.empty();
  if (modes != 1) throw UsageError("predict needs exactly one of --senses, --smd, --wsd");
  const Lexicon lexicon = LoadLexicon(f.lexicon);
  const EmbeddingStore store = OpenStore(f.store);
  const ModelBundle b = BundleFromCheckpoint(LoadCheckpoint(f.checkpoint), store, lexicon);
  Manifest m;
  m.subcommand = "predict";
  m.inputs = {f.checkpoint, CheckpointDataPath(f.checkpoint), f.lexicon, f.store};
  m.config = {{"model_kind", ModelKindName(b.spec.kind)}};
  const bool combined = b.mpd && b.wsd;
  const SmdModel* smd = b.smd ? &*b.smd : nullptr;
  auto token_score = [&](const Token& t) {
    return combined ? CombinedSmdScore(*b.mpd, *b.wsd, store, lexicon, t)
                    : SmdScore(*b.smd, store, t);
  };
  std::string lines;
  std::map<std::string, std::size_t> skipped;

  if (f.senses_opt->count() > 0) {
    m.config["mode"] = "senses";
    std::vector<ScoredSense> items;
    if (f.senses && !f.senses->empty()) {
      items = ReadScoredSenses(*f.senses, false);
      m.inputs.push_back(*f.senses);
    } else {
      for (const Sense& s : lexicon.senses()) items.push_back({s, 0.0, 0});
    }
    std::vector<ScoredSense> usable;
    for (const ScoredSense& s : items) {
      if (!store.Contains(Namespace::kType, s.sense.wordform) ||
          !store.Contains(Namespace::kSynset, s.sense.definition_id)) {
        ++skipped["missing TYPE or SYNSET embedding"];
        continue;
      }
      usable.push_back(s);
    }
    if (b.mpd) {
      std::vector<Sense> senses;
      for (const ScoredSense& s : usable) senses.push_back(s.sense);
      const std::vector<double> scores = MpdScoreAll(*b.mpd, store, senses);
      for (std::size_t i = 0; i < usable.size(); ++i) usable[i].score = scores[i];
    } else if (b.smd) {
      // MelBERT-Average: mean token prediction over the sense's WSD tokens.
      if (f.wsd_corpus.empty() || f.seed_opt->count() == 0) {
        throw UsageError("scoring senses with an SMD checkpoint needs --wsd-corpus and --seed");
      }
      const auto corpus = LoadWsdCorpus(f.wsd_corpus, &lexicon);
      m.inputs.push_back(f.wsd_corpus);
      m.seed = f.seed;
      std::vector<WsdExample> kept;
      std::map<std::string, double> cache;
      for (const WsdExample& ex : corpus) {
        if (!HasTokenVectors(smd, store, ex.token)) {
          ++skipped["wsd corpus token without embeddings"];
          continue;
        }
        cache.emplace(TokenKey(ex.token), SmdScore(*b.smd, store, ex.token));
        kept.push_back(ex);
      }
      const TokenScorer scorer = [&](const Token& t) { return cache.at(TokenKey(t)); };
      CounterRng rng = CounterRng(f.seed).Split("melbert_average");
      for (ScoredSense& s : usable) s.score = MelbertAverage(scorer, kept, s.sense, rng);
    } else {
      throw UsageError("checkpoint kind '" + std::string(ModelKindName(b.spec.kind)) +
                       "' cannot score senses");
    }
    for (const ScoredSense& s : usable) {
      json j = {{"wordform", s.sense.wordform}, {"definition", s.sense.definition_id},
                {"score", s.score}};
      if (f.senses && !f.senses->empty()) j["gold"] = s.gold;
      lines += j.dump() + "\n";
    }
  } else if (!f.smd.empty()) {
    m.config["mode"] = "smd";
    if (!combined && !smd) {
      throw UsageError("checkpoint kind '" + std::string(ModelKindName(b.spec.kind)) +
                       "' cannot score tokens");
    }
    m.inputs.push_back(f.smd);
    for (const SmdExample& ex : LoadSmdCorpus(f.smd)) {
      if (!HasTokenVectors(smd, store, ex.token)) {
        ++skipped["missing token embeddings"];
        continue;
      }
      if (combined && UsableCandidates(lexicon, store, ex.token).empty()) {
        ++skipped["no usable candidate senses"];
        continue;
      }
      lines += json{{"key", TokenKey(ex.token)}, {"score", token_score(ex.token)},
                    {"gold", ex.label}}.dump() +
               "\n";
    }
  } else {
    m.config["mode"] = "wsd";
    m.inputs.push_back(f.wsd);
    for (const WsdExample& ex : LoadWsdCorpus(f.wsd, &lexicon)) {
      if (!HasTokenVectors(smd, store, ex.token)) {
        ++skipped["missing token embeddings"];
        continue;
      }
      json j = {{"key", TokenKey(ex.token)},
                {"wordform", ex.gold.wordform},
                {"definition", ex.gold.definition_id},
                {"gold", ex.gold.definition_id}};
      if (b.wsd) {
        const auto candidates = CandidateSenses(lexicon, ex.token.wordform());
        const auto p = WsdScores(*b.wsd, store, lexicon, ex.token, candidates);
        j["predicted"] =
            candidates[std::max_element(p.begin(), p.end()) - p.begin()].definition_id;
      }
      if (combined || smd) {
        if (combined && UsableCandidates(lexicon, store, ex.token).empty()) {
          ++skipped["no usable candidate senses"];
          continue;
        }
        j["score"] = token_score(ex.token);
      }
      lines += j.dump() + "\n";
    }
  }
  WriteFile(f.out, lines);
  m.outputs = {f.out};
  if (!skipped.empty()) m.notes["skipped"] = skipped;
  m.Write(ManifestPath(f.out, false));
  for (const auto& [reason, n] : skipped) err << "skipped " << n << ": " << reason << "\n";
  out << "wrote " << f.out << "\n";
}

struct ReportFlags {
  std::string a, b, metric = "f1", out;
  std::size_t rounds = 1000;
  std::uint64_t seed = 0;
  double threshold = kDefaultThreshold;
};

void DoReport(const ReportFlags& f, std::ostream& out) {
  std::vector<double> sa, sb;
  std::vector<int> golds;
  PairedMetric metric;
  json extra = json::object();
  if (f.metric == "relative_roc_auc") {
    const auto a = ReadScoredSenses(f.a, true);
    const auto b = ReadScoredSenses(f.b, true);
    std::map<Sense, std::size_t> pos;
    for (std::size_t i = 0; i < b.size(); ++i) pos.emplace(b[i].sense, i);
    if (a.size() != b.size()) throw DataError("prediction files are not aligned");
    auto senses = std::make_shared<std::vector<Sense>>();
    for (const ScoredSense& s : a) {
      auto it = pos.find(s.sense);
      if (it == pos.end() || b[it->second].gold != s.gold) {
        throw DataError("prediction files are not aligned at " + s.sense.wordform + "/" +
                        s.sense.definition_id);
      }
      senses->push_back(s.sense);
      sa.push_back(s.score);
      sb.push_back(b[it->second].score);
      golds.push_back(s.gold);
    }
    metric = [senses](std::span<const double> scores, std::span<const int> g) {
      std::vector<ScoredSense> items;
      for (std::size_t i = 0; i < scores.size(); ++i) items.push_back({(*senses)[i], scores[i], g[i]});
      return RelativeRocAuc(items, nullptr, kernels::Exec::kSerial).mean;
    };
  } else if (f.metric == "f1") {
    const KeyedRecords a = ReadKeyed(f.a, {"score", "gold"});
    const KeyedRecords b = ReadKeyed(f.b, {"score", "gold"});
    const auto order = Align(a, b);
    for (std::size_t i = 0; i < order.size(); ++i) {
      sa.push_back(a.records[i].at("score").get<double>());
      sb.push_back(b.records[order[i]].at("score").get<double>());
      golds.push_back(GoldOf(a.records[i], f.a));
      if (GoldOf(b.records[order[i]], f.b) != golds.back()) {
        throw DataError("gold labels differ for key '" + a.keys[i] + "'");
      }
    }
    const double t = f.threshold;
    metric = [t](std::span<const double> s, std::span<const int> g) { return F1Binary(s, g, t); };
  } else if (f.metric == "micro_f1") {
    // Per-item correctness; its mean is micro-F1.
    const KeyedRecords a = ReadKeyed(f.a, {"predicted", "gold"});
    const KeyedRecords b = ReadKeyed(f.b, {"predicted", "gold"});
    const auto order = Align(a, b);
    for (std::size_t i = 0; i < order.size(); ++i) {
      const json& ra = a.records[i];
      const json& rb = b.records[order[i]];
      if (LabelString(ra.at("gold")) != LabelString(rb.at("gold"))) {
        throw DataError("gold labels differ for key '" + a.keys[i] + "'");
      }
      sa.push_back(LabelString(ra.at("predicted")) == LabelString(ra.at("gold")) ? 1.0 : 0.0);
      sb.push_back(LabelString(rb.at("predicted")) == LabelString(rb.at("gold")) ? 1.0 : 0.0);
      golds.push_back(1);
    }
    metric = [](std::span<const double> s, std::span<const int>) {
      double total = 0.0;
      for (double v : s) total += v;
      return total / static_cast<double>(s.size());
    };
  } else {
    throw UsageError("unknown --metric '" + f.metric + "' (f1, relative_roc_auc, micro_f1)");
  }
  if (f.rounds == 0) throw UsageError("--rounds must be positive");
  const PermutationResult p = PermutationTest(sa, sb, golds, metric, f.rounds, f.seed);
  const json r = {{"metric", f.metric},
                  {"metric_a", metric(sa, golds)},
                  {"metric_b", metric(sb, golds)},
                  {"observed_delta", p.observed_delta},
                  {"p_value", p.p_value},
                  {"rounds", p.rounds},
                  {"at_least_as_extreme", p.at_least_as_extreme},
                  {"significant_05", p.significant_05},
                  {"significant_01", p.significant_01},
                  {"seed", p.seed},
                  {"items", sa.size()},
                  {"threshold", f.threshold}};
  WriteJson(f.out, r);
  Manifest m;
  m.subcommand = "report";
  m.seed = f.seed;
  m.inputs = {f.a, f.b};
  m.config = {{"metric", f.metric}, {"rounds", f.rounds}, {"threshold", f.threshold}};
  m.outputs = {f.out};
  m.Write(ManifestPath(f.out, false));
  out << r.dump(2) << "\n";
}

}  // namespace

int Run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Metaphorical polysemy detection: train, search, evaluate and compare models.",
               "mpd"};
  app.footer(kGridHelp);
  app.set_version_flag("--version", std::string(MPD_VERSION));
  app.require_subcommand(1);

  SynthFlags synth;
  auto* synth_cmd = app.add_subcommand("synth", "Write the planted synthetic benchmark");
  synth_cmd->add_option("--out", synth.out, "Output directory")->required();
  synth_cmd->add_option("--seed", synth.seed, "Random seed")->required();
  synth_cmd->add_option("--k", synth.options.k, "Embedding dimension");
  synth_cmd->add_option("--wordforms", synth.options.wordforms, "Number of wordforms");
  synth_cmd->add_option("--smd-train", synth.options.smd_train, "SMD training examples");
  synth_cmd->add_option("--wsd-train", synth.options.wsd_train, "WSD training examples");
  synth_cmd->add_option("--noise", synth.options.token_noise, "Token vector noise");

  IngestFlags ingest;
  auto* ingest_cmd =
      app.add_subcommand("ingest", "Validate, filter and split canonical corpus JSONL");
  ingest_cmd->add_option("--lexicon", ingest.lexicon, "Lexicon JSONL")->required();
  ingest_cmd->add_option("--smd", ingest.smd, "SMD corpus JSONL");
  ingest_cmd->add_option("--wsd", ingest.wsd, "WSD corpus JSONL");
  ingest_cmd->add_option("--out", ingest.out, "Output directory")->required();
  ingest_cmd->add_option("--seed", ingest.seed, "Split seed")->required();
  ingest_cmd->add_option("--ratios", ingest.ratios, "train dev test ratios")->expected(3)
      ->delimiter(',');
  ingest_cmd->add_flag("--conventional-only", ingest.conventional_only,
                       "Drop novel metaphors (novelty above the threshold)");
  ingest_cmd->add_option("--novelty-threshold", ingest.novelty_threshold, "Novelty cut-off");

  TrainFlags train;
  auto* train_cmd = app.add_subcommand("train", "Train one model");
  AddDataFlags(train_cmd, train.data);
  AddConfigFlags(train_cmd, train.config);
  train_cmd->add_option("--out", train.out, "Checkpoint manifest path (.json)")->required();
  train_cmd->add_option("--seed", train.seed, "Training seed")->required();

  SearchFlags search;
  auto* search_cmd = app.add_subcommand("search", "Random hyperparameter search");
  AddDataFlags(search_cmd, search.data);
  AddConfigFlags(search_cmd, search.config);
  search_cmd->add_option("--out", search.out, "Output directory")->required();
  search_cmd->add_option("--seed", search.seed, "Search seed")->required();
  search_cmd->add_option("--per-alpha", search.per_alpha, "Samples per alpha value");
  search_cmd->add_option("--max-runs", search.max_runs, "Cap on the number of runs (0: none)");
  search_cmd->add_option("--criterion", search.criterion,
                         "smd_dev_f1, wsd_dev_micro_f1 or mean_smd_wsd");

  EvalFlags eval;
  auto* eval_cmd = app.add_subcommand("evaluate", "Score prediction files");
  eval_cmd->require_subcommand(1);
  std::map<std::string, CLI::App*> eval_cmds;
  for (const char* which : {"mpd", "smd", "wsd", "consistency", "kappa"}) {
    auto* c = eval_cmd->add_subcommand(which);
    eval_cmds[which] = c;
    c->add_option("--out", eval.out, "EvalReport path");
    if (std::string_view(which) == "kappa") {
      c->add_option("--a", eval.a, "Labels of annotator A ({key, label} JSONL)")->required();
      c->add_option("--b", eval.b, "Labels of annotator B")->required();
      continue;
    }
    c->add_option("--pred", eval.pred, "Prediction JSONL")->required();
    c->add_option("--threshold", eval.threshold, "Classification threshold");
  }
  eval_cmds["mpd"]->description("Relative ROC-AUC and F1 of scored senses");
  eval_cmds["mpd"]->add_option("--lexicon", eval.lexicon, "Lexicon for sense validation");
  eval_cmds["smd"]->description("F1 of token metaphoricity");
  eval_cmds["wsd"]->description("Micro-F1 of sense predictions");
  eval_cmds["consistency"]->description("Same-sense consistency of token predictions");
  eval_cmds["consistency"]->add_option("--min-count", eval.min_count, "Minimum tokens per sense");
  eval_cmds["kappa"]->description("Cohen's kappa between two annotations");

  PredictFlags predict;
  auto* predict_cmd = app.add_subcommand("predict", "Score senses or tokens with a checkpoint");
  predict_cmd->add_option("--checkpoint", predict.checkpoint, "Checkpoint manifest")->required();
  predict_cmd->add_option("--store", predict.store, "Embedding store")->required();
  predict_cmd->add_option("--lexicon", predict.lexicon, "Lexicon JSONL")->required();
  predict_cmd->add_option("--out", predict.out, "Output JSONL")->required();
  predict.senses_opt = predict_cmd->add_option(
      "--senses", predict.senses, "Score senses: all in the lexicon, or those in FILE")
      ->expected(0, 1);
  predict_cmd->add_option("--smd", predict.smd, "Score the tokens of an SMD corpus");
  predict_cmd->add_option("--wsd", predict.wsd, "Predict the tokens of a WSD corpus");
  predict_cmd->add_option("--wsd-corpus", predict.wsd_corpus,
                          "WSD corpus for MelBERT-Average sense scores");
  predict.seed_opt = predict_cmd->add_option("--seed", predict.seed, "Seed (MelBERT-Average)");

  ReportFlags report;
  auto* report_cmd = app.add_subcommand("report", "Permutation test between two prediction files");
  report_cmd->add_option("--a", report.a, "Predictions of system A")->required();
  report_cmd->add_option("--b", report.b, "Predictions of system B")->required();
  report_cmd->add_option("--metric", report.metric, "f1, relative_roc_auc or micro_f1");
  report_cmd->add_option("--rounds", report.rounds, "Permutation rounds");
  report_cmd->add_option("--seed", report.seed, "Permutation seed")->required();
  report_cmd->add_option("--threshold", report.threshold, "Classification threshold");
  report_cmd->add_option("--out", report.out, "Report JSON")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (synth_cmd->parsed()) DoSynth(synth, out);
    if (ingest_cmd->parsed()) DoIngest(ingest, out);
    if (train_cmd->parsed()) DoTrain(train, out);
    if (search_cmd->parsed()) DoSearch(search, out);
    for (const auto& [which, c] : eval_cmds) {
      if (c->parsed()) DoEvaluate(which, eval, out);
    }
    if (predict_cmd->parsed()) DoPredict(predict, out, err);
    if (report_cmd->parsed()) DoReport(report, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kDataError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
  return kOk;
}

int Dispatch(int argc, const char* const* argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return Run(args, std::cout, std::cerr);
}

}  // namespace mpd::cli
