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

// Acceptance gate: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "mpd/adamw.h"
#include "mpd/evaluation.h"
#include "mpd/models.h"
#include "mpd/synthetic.h"
#include "mpd/training.h"
#include "testing.h"

namespace mpd {
namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void Require(bool ok, const std::string& what) {
    if (!ok && pass) detail = what;
    pass = pass && ok;
  }
};

double Seconds(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - since).count();
}

std::string Fmt(const char* fmt, double a, double b = 0, double c = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, fmt, a, b, c);
  return buf;
}

// 1. Analytic gradients against central differences, every architecture.
Outcome GradientCorrectness() {
  Outcome o;
  const auto start = std::chrono::steady_clock::now();
  double worst = 0.0;
  std::size_t checked = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const SyntheticBenchmark w = testing::SmallWorld(1000 + seed);
    for (ModelKind kind : testing::AllKinds()) {
      for (WsdKind wsd : {WsdKind::kBaseline, WsdKind::kEwiser}) {
        if (wsd == WsdKind::kEwiser && kind != ModelKind::kCombined) continue;
        ModelSpec spec = testing::SmallSpec(kind, 8, seed % 2 ? 0.2 : 0.0);
        spec.wsd = wsd;
        ModelBundle b = BuildBundle(spec, w.store, w.lexicon, CounterRng(seed));
        const auto r = testing::CheckGradients(testing::ArchitectureCase(b, w, 4), CounterRng(seed + 77));
        worst = std::max(worst, r.max_rel_error);
        checked += r.checked;
      }
    }
  }
  const double elapsed = Seconds(start);
  o.detail = Fmt("max relative error %.2e over %.0f coordinates, %.1fs", worst,
                 static_cast<double>(checked), elapsed);
  o.pass = worst < 1e-4 && elapsed < 60.0;
  return o;
}

// 2. Combined score against the explicit sum over senses.
Outcome MarginalizationOracle() {
  Outcome o;
  double worst = 0.0;
  std::size_t cases = 0;
  for (std::uint64_t world = 0; world < 10; ++world) {
    const SyntheticBenchmark w = testing::SmallWorld(2000 + world, 12, 100);
    ModelSpec spec = testing::SmallSpec(ModelKind::kCombined, 8, 0.0);
    spec.wsd = world % 2 ? WsdKind::kEwiser : WsdKind::kBaseline;
    const ModelBundle b = BuildBundle(spec, w.store, w.lexicon, CounterRng(world));
    for (const WsdExample& ex : w.wsd_train) {
      const auto cands = UsableCandidates(w.lexicon, w.store, ex.token);
      const auto p = WsdScores(*b.wsd, w.store, w.lexicon, ex.token, cands);
      double brute = 0.0;
      for (std::size_t i = 0; i < cands.size(); ++i) brute += MpdScore(*b.mpd, w.store, cands[i]) * p[i];
      worst = std::max(worst, std::abs(CombinedSmdScore(*b.mpd, *b.wsd, w.store, w.lexicon, ex.token) - brute));
      ++cases;
    }
  }
  o.Require(worst <= 1e-12, "marginal differs from brute force");

  // One candidate: the marginal is exactly p(m | s).
  bool collapse = true;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Lexicon lex = Lexicon::FromRecords({{"a.n.01", "", "n", {"a"}, {}}});
    EmbeddingStore store(8);
    CounterRng rng(seed);
    const Token t{"c", "d", "s", {"a"}, 0};
    store.Put(Namespace::kType, "a", testing::RandomMatrix(1, 8, rng).values());
    store.Put(Namespace::kSynset, "a.n.01", testing::RandomMatrix(1, 8, rng).values());
    store.Put(Namespace::kToken, TokenKey(t), testing::RandomMatrix(1, 8, rng).values());
    const ModelBundle b = BuildBundle(testing::SmallSpec(ModelKind::kCombined, 8, 0.0), store, lex, rng);
    collapse = collapse && CombinedSmdScore(*b.mpd, *b.wsd, store, lex, t) == MpdScore(*b.mpd, store, {"a", "a.n.01"});
  }
  o.Require(collapse, "single-sense collapse not exact");
  if (o.pass) o.detail = Fmt("max |diff| %.1e over %.0f cases; single-sense collapse exact", worst, static_cast<double>(cases));
  return o;
}

// 3. Distributions and probabilities.
Outcome DistributionSanity() {
  Outcome o;
  double worst_sum = 0.0, worst_identity = 0.0;
  bool in_range = true;
  for (std::uint64_t world = 0; world < 4; ++world) {
    const SyntheticBenchmark w = testing::SmallWorld(3000 + world, 12, 150);
    for (ModelKind kind : testing::AllKinds()) {
      const ModelBundle b = BuildBundle(testing::SmallSpec(kind, 8, 0.1), w.store, w.lexicon, CounterRng(world));
      if (b.wsd) {
        for (const WsdExample& ex : w.wsd_train) {
          const auto p = WsdScores(*b.wsd, w.store, w.lexicon, ex.token, CandidateSenses(w.lexicon, ex.token.wordform()));
          double total = 0.0;
          for (double v : p) {
            in_range = in_range && v >= 0.0 && v <= 1.0;
            total += v;
          }
          worst_sum = std::max(worst_sum, std::abs(total - 1.0));
        }
      }
      if (b.mpd) {
        for (double v : MpdScoreAll(*b.mpd, w.store, w.senses)) in_range = in_range && v >= 0.0 && v <= 1.0;
      }
      for (const SmdExample& ex : w.smd_train) {
        double v = 0.5;
        if (b.smd) v = SmdScore(*b.smd, w.store, ex.token);
        if (b.mpd && b.wsd) v = CombinedSmdScore(*b.mpd, *b.wsd, w.store, w.lexicon, ex.token);
        in_range = in_range && v >= 0.0 && v <= 1.0;
      }
    }
  }
  CounterRng rng(31);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t cols = 2 + rng.Below(12);
    const Matrix logits = testing::RandomMatrix(1, cols, rng, 8.0);
    std::vector<std::size_t> cand;
    for (std::size_t c = 0; c < cols; ++c) {
      if (rng.Bernoulli(0.6)) cand.push_back(c);
    }
    if (cand.empty()) cand.push_back(0);
    Tape t(kernels::Exec::kSerial);
    const Matrix masked = t.value(t.MaskedSoftmax(t.Input(logits), {cand}));
    double max = logits[0], z = 0.0, kept = 0.0;
    for (double v : logits.values()) max = std::max(max, v);
    for (double v : logits.values()) z += std::exp(v - max);
    for (std::size_t c : cand) kept += std::exp(logits[c] - max) / z;
    for (std::size_t c : cand) {
      worst_identity = std::max(worst_identity, std::abs(masked[c] - std::exp(logits[c] - max) / z / kept));
    }
  }
  o.Require(worst_sum <= 1e-9, "WSD distribution does not sum to 1");
  o.Require(in_range, "probability outside [0, 1]");
  o.Require(worst_identity <= 1e-12, "masked softmax identity violated");
  if (o.pass) o.detail = Fmt("max |sum - 1| %.1e; masked-softmax identity %.1e; all probabilities in [0,1]", worst_sum, worst_identity);
  return o;
}

double PairCountAuc(const std::vector<double>& s, const std::vector<int>& g) {
  double wins = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (g[i] == 1 && g[j] == 0) {
        pairs += 1;
        wins += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
      }
    }
  }
  return wins / pairs;
}

// 4. Metric oracles.
Outcome MetricOracles() {
  Outcome o;
  CounterRng rng(41);
  std::size_t auc_mismatch = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 2 + rng.Below(19);
    std::vector<ScoredSense> items;
    std::vector<double> s(n);
    std::vector<int> g(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(rng.Below(4)) / 3.0;
      g[i] = i == 0 ? 1 : i == 1 ? 0 : static_cast<int>(rng.Below(2));
      items.push_back({{"w", "d" + std::to_string(i)}, s[i], g[i]});
    }
    auc_mismatch += RelativeRocAuc(items).mean != PairCountAuc(s, g);
  }
  o.Require(auc_mismatch == 0, "relative ROC-AUC differs from pair counting");

  double f1_worst = 0.0, micro_worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng.Below(50);
    std::vector<double> s(n);
    std::vector<int> g(n);
    std::vector<std::string> p(n), gl(n);
    double tp = 0, fp = 0, fn = 0, correct = 0;
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = rng.Uniform();
      g[i] = static_cast<int>(rng.Below(2));
      tp += s[i] >= 0.5 && g[i] == 1;
      fp += s[i] >= 0.5 && g[i] == 0;
      fn += s[i] < 0.5 && g[i] == 1;
      p[i] = std::to_string(rng.Below(3));
      gl[i] = std::to_string(rng.Below(3));
      correct += p[i] == gl[i];
    }
    const double f1 = tp == 0 ? 0.0 : 2 * tp / (2 * tp + fp + fn);
    f1_worst = std::max(f1_worst, std::abs(F1Binary(s, g) - f1));
    const double micro = correct == 0 ? 0.0 : 2 * correct / (2 * correct + 2 * (n - correct));
    micro_worst = std::max(micro_worst, std::abs(MicroF1(p, gl) - micro));
  }
  o.Require(f1_worst <= 1e-12, "F1 differs from confusion matrix");
  o.Require(micro_worst <= 1e-12, "micro-F1 differs from confusion matrix");

  // Majority predictor on a mixed-gold set: constant 0 scores.
  bool majority = true;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<ScoredSense> items;
    std::vector<int> train;
    for (int i = 0; i < 11; ++i) train.push_back(i < 7 ? 0 : 1);
    BaselinePredictor m(BaselineKind::kMajority, train, CounterRng(trial));
    std::vector<double> s;
    std::vector<int> g;
    for (int w = 0; w < 6; ++w) {
      for (int i = 0; i < 3; ++i) {
        const int gold = i == 0 ? 1 : i == 1 ? 0 : static_cast<int>(rng.Below(2));
        const double score = m.Predict();
        items.push_back({{"w" + std::to_string(w), std::to_string(i)}, score, gold});
        s.push_back(score);
        g.push_back(gold);
      }
    }
    majority = majority && F1Binary(s, g) == 0.0 && RelativeRocAuc(items).mean == 0.5;
  }
  o.Require(majority, "majority pattern not reproduced");
  if (o.pass) {
    o.detail = Fmt("AUC exact on 1000 groups; F1 %.1e, micro-F1 %.1e; majority F1 .00 / AUC .50", f1_worst, micro_worst);
  }
  return o;
}

double ExactP(const std::vector<double>& a, const std::vector<double>& b, const std::vector<int>& g,
              const PairedMetric& m) {
  const double obs = std::abs(m(a, g) - m(b, g));
  std::size_t hits = 0;
  const std::size_t n = a.size();
  for (std::size_t mask = 0; mask < (std::size_t{1} << n); ++mask) {
    std::vector<double> x = a, y = b;
    for (std::size_t i = 0; i < n; ++i) {
      if (mask >> i & 1) std::swap(x[i], y[i]);
    }
    hits += std::abs(m(x, g) - m(y, g)) >= obs - 1e-12 * std::max(1.0, obs);
  }
  return static_cast<double>(hits) / static_cast<double>(std::size_t{1} << n);
}

// 5. Permutation test.
Outcome PermutationCriterion() {
  Outcome o;
  const PairedMetric f1 = [](std::span<const double> s, std::span<const int> g) { return F1Binary(s, g); };
  const std::vector<double> x{0.2, 0.8, 0.6, 0.1, 0.9};
  const std::vector<int> gx{0, 1, 1, 0, 0};
  o.Require(PermutationTest(x, x, gx, f1, 1000, 1).p_value == 1.0, "identical systems: p != 1");

  std::vector<double> a, b;
  std::vector<int> g;
  for (int i = 0; i < 60; ++i) {
    g.push_back(i % 2);
    a.push_back(i % 2 ? 0.9 : 0.1);
    b.push_back(i % 2 ? 0.1 : 0.9);
  }
  const double min_p = PermutationTest(a, b, g, f1, 1000, 2).p_value;
  o.Require(min_p == 1.0 / 1001.0, "minimum p is not 1/1001");

  // Small cases against exhaustive enumeration, 100 repetitions each.
  CounterRng rng(51);
  const std::size_t rounds = 1000;
  std::size_t reps_outside = 0, reps = 0, means_outside = 0, cases = 0;
  for (int c = 0; c < 20; ++c) {
    const std::size_t n = 3 + rng.Below(8);
    std::vector<double> sa(n), sb(n);
    std::vector<int> sg(n);
    for (std::size_t i = 0; i < n; ++i) {
      sa[i] = rng.Uniform();
      sb[i] = rng.Uniform();
      sg[i] = static_cast<int>(rng.Below(2));
    }
    const double exact = ExactP(sa, sb, sg, f1);
    const double expected = (1.0 + rounds * exact) / (rounds + 1.0);
    const double se = std::sqrt(exact * (1.0 - exact) / rounds);
    double sum = 0.0;
    for (std::uint64_t r = 0; r < 100; ++r) {
      const double p = PermutationTest(sa, sb, sg, f1, rounds, 10000 * c + r).p_value;
      reps_outside += std::abs(p - expected) > 3 * se + 1e-12;
      ++reps;
      sum += p;
    }
    means_outside += std::abs(sum / 100 - expected) > 3 * se / 10 + 1e-12;
    ++cases;
  }
  const double coverage = 1.0 - static_cast<double>(reps_outside) / static_cast<double>(reps);
  o.Require(means_outside == 0, "mean of 100 repetitions outside 3 standard errors");
  o.Require(coverage >= 0.99, "fewer than 99% of repetitions within 3 standard errors");
  if (o.pass) {
    o.detail = Fmt("p(identical)=1, min p=1/1001; %.0f cases: all 100-rep means within 3 SE, %.2f%% of single reps within 3 SE",
                   static_cast<double>(cases), 100.0 * coverage);
  }
  return o;
}

std::vector<Matrix> Phi(const ModelBundle& b) {
  std::vector<Matrix> out;
  for (const ParamRef& p : const_cast<ModelBundle&>(b).Params(ParamGroup::kPhi)) out.push_back(*p.value);
  return out;
}

// 6. Two-phase trainer state machine.
Outcome TrainerStateMachine() {
  Outcome o;
  const SyntheticBenchmark w = testing::SmallWorld(6000, 10, 200);
  TrainConfig c;
  c.theta = {2, 16};
  c.phi = {1, 0};
  c.learning_rate = 0.01;
  c.lr_divisor = 10;
  c.batch_size = 16;
  c.check_interval = 5;
  c.patience = 3;
  c.seed = 6;
  c.max_steps = 5000;
  std::vector<Matrix> frozen;
  bool phi_moved = false;
  TrainOptions opts;
  opts.observer = [&](const TrainEvent& e) {
    if (e.kind == TrainEventKind::kPhaseTransition) frozen = Phi(*e.bundle);
    if (e.phase == 2 && e.kind != TrainEventKind::kPhaseTransition) phi_moved = phi_moved || Phi(*e.bundle) != frozen;
  };
  const TrainResult r = Train(c, w.Data(), w.store, w.lexicon, opts);
  const TrainReport& rep = r.report;
  o.Require(rep.phase_transition_step.has_value(), "no first patience exhaustion");
  o.Require(rep.stop_reason == "second patience exhaustion", "did not halt at second exhaustion");
  o.Require(!phi_moved, "WSD parameters changed in phase 2");
  o.Require(rep.learning_rate[1] == rep.learning_rate[0] / c.lr_divisor, "lr not divided");
  const double restore_gap = rep.phase1_restored_dev_loss && rep.best_dev_loss[0]
                                 ? std::abs(*rep.phase1_restored_dev_loss - *rep.best_dev_loss[0])
                                 : 1.0;
  o.Require(restore_gap <= 1e-12, "restored dev loss differs from recorded best");
  const TrainResult again = Train(c, w.Data(), w.store, w.lexicon);
  bool same = again.report.ToJson().dump() == rep.ToJson().dump();
  auto p1 = const_cast<ModelBundle&>(r.bundle).AllParams();
  auto p2 = const_cast<ModelBundle&>(again.bundle).AllParams();
  for (std::size_t i = 0; i < p1.size(); ++i) same = same && *p1[i].value == *p2[i].value;
  o.Require(same, "run not bitwise reproducible");
  if (o.pass) {
    o.detail = Fmt("transition at step %.0f, halt at %.0f; restore gap %.1e; phi frozen, lr/10, reproducible",
                   static_cast<double>(*rep.phase_transition_step), static_cast<double>(rep.steps), restore_gap);
  }
  return o;
}

// 7. Planted-model learnability.
Outcome Learnability() {
  Outcome o;
  const auto start = std::chrono::steady_clock::now();
  const SyntheticBenchmark bench = MakeSynthetic(SyntheticOptions{}, 7);
  TrainConfig c;  // default optimizer settings, alpha 0.8
  c.theta = {2, 300};
  c.max_steps = 2000;
  c.seed = 1;
  const TrainResult r = Train(c, bench.Data(), bench.store, bench.lexicon);
  const std::vector<double> scores = MpdScoreAll(*r.bundle.mpd, bench.store, bench.senses);
  std::vector<ScoredSense> items;
  for (std::size_t i = 0; i < scores.size(); ++i) items.push_back({bench.senses[i], scores[i], bench.planted_label[i]});
  const double auc = RankAuc(scores, bench.planted_label);
  const double relative = RelativeRocAuc(items).mean;
  const double f1 = r.report.smd_train_f1.value_or(0.0);
  const double elapsed = Seconds(start);
  o.detail = Fmt("SMD train F1 %.4f, sense ROC-AUC %.4f", f1, auc) +
             Fmt(" (per-wordform mean %.4f), %.0f steps", relative, static_cast<double>(r.report.steps)) +
             Fmt(", %.1fs", elapsed);
  o.pass = f1 >= 0.95 && auc >= 0.90 && r.report.steps <= 2000 && elapsed < 300.0;
  return o;
}

// 8. Consistency diagnostic.
Outcome Consistency() {
  Outcome o;
  const Sense a{"w", "a"}, b{"w", "b"}, c{"w", "c"};
  const std::vector<Sense> s{a, a, b, b, c};
  const std::vector<double> p{0.9, 0.2, 0.8, 0.7, 0.1};
  const ConsistencyResult r2 = ConsistencyAnalysis(s, p, 0.5, 2);
  o.Require(r2.considered == 2 && r2.inconsistent == 1 && r2.rate == 0.5, "1 of 2 should give 0.5");

  std::vector<Sense> big;
  std::vector<double> q;
  for (int i = 0; i < 15; ++i) {
    big.push_back(a);
    q.push_back(i == 0 ? 0.9 : 0.1);
    big.push_back(b);
    q.push_back(0.9);
    big.push_back(c);
    q.push_back(i % 2 ? 0.6 : 0.3);
  }
  for (int i = 0; i < 14; ++i) {
    big.push_back({"v", "short"});
    q.push_back(i % 2 ? 0.9 : 0.1);
  }
  const ConsistencyResult r15 = ConsistencyAnalysis(big, q, 0.5, 15);
  o.Require(r15.considered == 3 && r15.inconsistent == 2 && r15.rate == 2.0 / 3.0, "min_count 15 rate");
  const ConsistencyResult r15_2 = ConsistencyAnalysis(big, q, 0.5, 2);
  o.Require(r15_2.considered == 4 && r15_2.rate == 0.75, "min_count 2 rate");
  if (o.pass) o.detail = "0.5 (1 of 2, min_count 2); 2/3 (min_count 15); 3/4 (min_count 2)";
  return o;
}

// 9. AdamW single step.
Outcome AdamWStep() {
  Outcome o;
  Matrix p(1, 1, 1.0), g(1, 1, 1.0);
  std::vector<ParamRef> params{{"p", &p}};
  AdamW opt(params, AdamWOptions{0.1, 0.9, 0.999, 1e-8, 0.01});
  const Matrix* grads[] = {&g};
  opt.Step(params, grads);
  o.detail = Fmt("p = %.7f", p[0]);
  o.pass = std::abs(p[0] - 0.8990000) <= 1e-6;
  return o;
}

}  // namespace
}  // namespace mpd

int main() {
  using namespace mpd;
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"gradient correctness", GradientCorrectness},
      {"marginalization oracle", MarginalizationOracle},
      {"distribution sanity", DistributionSanity},
      {"metric oracles", MetricOracles},
      {"permutation test", PermutationCriterion},
      {"two-phase trainer", TrainerStateMachine},
      {"end-to-end learnability", Learnability},
      {"consistency diagnostic", Consistency},
      {"AdamW single step", AdamWStep},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("[%s] %zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail.c_str());
    std::fflush(stdout);
    failures += !o.pass;
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
