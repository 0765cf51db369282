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

#ifndef MPD_TESTS_TESTING_H_
#define MPD_TESTS_TESTING_H_

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "mpd/bundle.h"
#include "mpd/models.h"
#include "mpd/rng.h"
#include "mpd/synthetic.h"
#include "mpd/tape.h"

namespace mpd::testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("mpd_test_" + tag + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string File(const std::string& name) const { return (path_ / name).string(); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

// Small planted benchmark, quick enough for unit tests.
inline SyntheticBenchmark SmallWorld(std::uint64_t seed, std::size_t wordforms = 6,
                                     std::size_t examples = 40) {
  SyntheticOptions o;
  o.k = 8;
  o.wordforms = wordforms;
  o.smd_train = examples;
  o.wsd_train = examples;
  o.smd_dev = examples / 2;
  o.wsd_dev = examples / 2;
  o.smd_test = examples / 2;
  o.wsd_test = examples / 2;
  return MakeSynthetic(o, seed);
}

inline Matrix RandomMatrix(std::size_t rows, std::size_t cols, CounterRng& rng,
                           double scale = 1.0) {
  Matrix m(rows, cols);
  for (double& v : m.values()) v = scale * (2.0 * rng.Uniform() - 1.0);
  return m;
}

// A graph to differentiate: build adds the forward pass to a tape (drawing any
// dropout from the rng it is handed) and returns the output node.
struct GradCase {
  std::vector<ParamRef> params;
  std::function<Tape::Var(Tape&, CounterRng&)> build;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped_kinks = 0;
};

// Compares tape gradients of L = sum(out * R), R random, with central
// differences. Coordinates whose +-h steps change a ReLU sign are skipped.
inline GradCheckResult CheckGradients(const GradCase& c, CounterRng rng, double h = 1e-5) {
  const CounterRng dropout = rng.Split("dropout");
  CounterRng weights_rng = rng.Split("weights");
  Matrix weights;

  auto evaluate = [&](Tape& tape) {
    CounterRng d = dropout;
    Tape::Var out = c.build(tape, d);
    if (weights.empty()) {
      weights = RandomMatrix(tape.value(out).rows(), tape.value(out).cols(), weights_rng);
    }
    return tape.Sum(tape.Mul(out, tape.Input(weights)));
  };

  Tape base(kernels::Exec::kSerial);
  Tape::Var loss = evaluate(base);
  const std::vector<bool> pattern = base.ReluPattern();
  base.Backward(loss);

  GradCheckResult r;
  for (const ParamRef& p : c.params) {
    const Matrix* g = base.ParamGrad(*p.value);
    for (std::size_t i = 0; i < p.value->size(); ++i) {
      const double original = (*p.value)[i];
      auto at = [&](double x, bool& kink) {
        (*p.value)[i] = x;
        Tape t(kernels::Exec::kSerial);
        const double v = t.value(evaluate(t))[0];
        kink = kink || t.ReluPattern() != pattern;
        return v;
      };
      bool kink = false;
      const double plus = at(original + h, kink);
      const double minus = at(original - h, kink);
      (*p.value)[i] = original;
      if (kink) {
        ++r.skipped_kinks;
        continue;
      }
      const double numeric = (plus - minus) / (2.0 * h);
      const double analytic = g ? (*g)[i] : 0.0;
      const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
      r.max_rel_error = std::max(r.max_rel_error, std::abs(analytic - numeric) / denom);
      ++r.checked;
    }
  }
  return r;
}

inline const std::vector<ModelKind>& AllKinds() {
  static const std::vector<ModelKind> kinds = {ModelKind::kMpd,         ModelKind::kWsdBaseline,
                                               ModelKind::kEwiser,      ModelKind::kSmdBaseline,
                                               ModelKind::kMelbert,     ModelKind::kCombined};
  return kinds;
}

// One gradient-check case per architecture over a small world. The bundle
// must outlive the case.
inline GradCase ArchitectureCase(ModelBundle& b, const SyntheticBenchmark& w, std::size_t batch) {
  GradCase c;
  c.params = b.AllParams();
  std::vector<Token> tokens;
  for (std::size_t i = 0; i < batch; ++i) tokens.push_back(w.wsd_train[i].token);
  std::vector<std::string> token_keys, sent_keys, type_keys;
  for (const Token& t : tokens) {
    token_keys.push_back(TokenKey(t));
    sent_keys.push_back(SentKey(t));
    type_keys.push_back(t.wordform());
  }
  const Matrix tok = StackVectors(w.store, Namespace::kToken, token_keys);
  const Matrix sent = StackVectors(w.store, Namespace::kSent, sent_keys);
  const Matrix type = StackVectors(w.store, Namespace::kType, type_keys);

  Tape::Candidates columns;
  CombinedLayout layout;
  std::vector<Sense> stacked;
  if (b.wsd) {
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      std::vector<std::size_t> cols;
      for (const Sense& s : UsableCandidates(w.lexicon, w.store, tokens[i])) {
        cols.push_back(*b.wsd->Column(w.lexicon, s));
        layout.gather.emplace_back(i, cols.back());
        layout.segment.push_back(i);
        stacked.push_back(s);
      }
      columns.push_back(cols);
    }
    layout.columns = columns;
  }
  const ModelBundle* bundle = &b;
  const SyntheticBenchmark* world = &w;
  const double dropout = b.spec.dropout;
  auto opts = [dropout](CounterRng& rng) {
    return ForwardOptions{dropout > 0.0, dropout > 0.0 ? &rng : nullptr};
  };
  switch (b.spec.kind) {
    case ModelKind::kMpd: {
      std::vector<Sense> senses(w.senses.begin(), w.senses.begin() + batch);
      const Matrix in = MpdInputs(w.store, senses);
      c.build = [bundle, in, opts](Tape& t, CounterRng& rng) {
        return MpdForward(t, *bundle->mpd, t.Input(in), opts(rng));
      };
      break;
    }
    case ModelKind::kWsdBaseline:
    case ModelKind::kEwiser:
      c.build = [bundle, tok, columns, opts](Tape& t, CounterRng& rng) {
        return WsdForward(t, *bundle->wsd, t.Input(tok), columns, opts(rng));
      };
      break;
    case ModelKind::kSmdBaseline:
    case ModelKind::kMelbert:
      c.build = [bundle, tok, sent, type, opts](Tape& t, CounterRng& rng) {
        return SmdForward(t, *bundle->smd, t.Input(tok), t.Input(sent), t.Input(type), opts(rng));
      };
      break;
    case ModelKind::kCombined: {
      const Matrix in = MpdInputs(world->store, stacked);
      c.build = [bundle, in, tok, layout, opts](Tape& t, CounterRng& rng) {
        return CombinedForward(t, *bundle->mpd, *bundle->wsd, t.Input(in), t.Input(tok), layout,
                               opts(rng));
      };
      break;
    }
  }
  return c;
}

inline ModelSpec SmallSpec(ModelKind kind, std::size_t k, double dropout) {
  ModelSpec s;
  s.kind = kind;
  s.k = k;
  s.theta = {2, 5};
  s.phi = {2, 6};
  s.dropout = dropout;
  return s;
}

}  // namespace mpd::testing

#endif  // MPD_TESTS_TESTING_H_
