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

#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "mpd/error.h"
#include "mpd/evaluation.h"
#include "mpd/rng.h"
#include "testing.h"

namespace mpd {
namespace {

// Pair counting: P(score+ > score-) + 0.5 P(tie).
double PairCountAuc(const std::vector<double>& s, const std::vector<int>& g) {
  double wins = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (g[i] != 1 || g[j] != 0) continue;
      ++pairs;
      wins += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
    }
  }
  return wins / static_cast<double>(pairs);
}

double ConfusionF1(const std::vector<double>& s, const std::vector<int>& g, double t) {
  int tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const bool p = s[i] >= t;
    tp += p && g[i] == 1;
    fp += p && g[i] == 0;
    fn += !p && g[i] == 1;
  }
  if (tp == 0) return 0.0;
  const double precision = static_cast<double>(tp) / (tp + fp);
  const double recall = static_cast<double>(tp) / (tp + fn);
  return 2 * precision * recall / (precision + recall);
}

TEST(RankAucTest, MatchesPairCountingWithTies) {
  CounterRng rng(1);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 2 + rng.Below(19);
    std::vector<double> s(n);
    std::vector<int> g(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(rng.Below(5)) / 4.0;  // coarse, so ties are common
      g[i] = static_cast<int>(rng.Below(2));
    }
    g[0] = 1;
    g[1] = 0;
    ASSERT_EQ(RankAuc(s, g), PairCountAuc(s, g));
  }
  const std::vector<double> s{0.1, 0.2};
  const std::vector<int> g{1, 1};
  EXPECT_THROW(RankAuc(s, g), DataError);
}

TEST(RelativeRocAucTest, MatchesPerWordformBruteForce) {
  CounterRng rng(2);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<ScoredSense> items;
    std::map<std::string, std::pair<std::vector<double>, std::vector<int>>> groups;
    const std::size_t wordforms = 1 + rng.Below(4);
    for (std::size_t w = 0; w < wordforms; ++w) {
      const std::string wf = "w" + std::to_string(w);
      const std::size_t n = 1 + rng.Below(20);
      for (std::size_t i = 0; i < n; ++i) {
        const double score = static_cast<double>(rng.Below(6)) / 5.0;
        const int gold = static_cast<int>(rng.Below(2));
        items.push_back({{wf, wf + ".n." + std::to_string(i)}, score, gold});
        groups[wf].first.push_back(score);
        groups[wf].second.push_back(gold);
      }
    }
    double total = 0.0;
    std::size_t used = 0, used_items = 0;
    for (const auto& [wf, sg] : groups) {
      const int pos = std::count(sg.second.begin(), sg.second.end(), 1);
      if (pos == 0 || pos == static_cast<int>(sg.second.size())) continue;
      total += PairCountAuc(sg.first, sg.second);
      ++used;
      used_items += sg.second.size();
    }
    if (used == 0) {
      EXPECT_THROW(RelativeRocAuc(items), DataError);
      continue;
    }
    const RelativeAucResult r = RelativeRocAuc(items);
    ASSERT_EQ(r.mean, total / static_cast<double>(used));
    ASSERT_EQ(r.per_wordform.size(), used);
    ASSERT_EQ(r.included_items, used_items);
    ASSERT_EQ(r.included_items + r.excluded_items, items.size());
    ASSERT_EQ(r.excluded.size(), groups.size() - used);
    const RelativeAucResult serial = RelativeRocAuc(items, nullptr, kernels::Exec::kSerial);
    ASSERT_EQ(serial.mean, r.mean);
  }
}

TEST(RelativeRocAucTest, ExclusionsCarryReasons) {
  const std::vector<ScoredSense> items{{{"a", "a.1"}, 0.9, 1},
                                       {{"a", "a.2"}, 0.1, 0},
                                       {{"b", "b.1"}, 0.5, 1},
                                       {{"b", "b.2"}, 0.5, 1}};
  const RelativeAucResult r = RelativeRocAuc(items);
  EXPECT_EQ(r.mean, 1.0);
  ASSERT_EQ(r.excluded.size(), 1u);
  EXPECT_EQ(r.excluded[0].item, "b");
  EXPECT_NE(r.excluded[0].reason.find("literal"), std::string::npos);
  const std::vector<ScoredSense> bad{{{"a", "a.1"}, 1.5, 1}, {{"a", "a.2"}, 0.1, 0}};
  EXPECT_THROW(RelativeRocAuc(bad), DataError);
}

TEST(RelativeRocAucTest, LexiconFiltersUnknownSenses) {
  const Lexicon lex = Lexicon::FromRecords(
      {{"a.1", "", "n", {"a"}, {}}, {"a.2", "", "n", {"a"}, {}}});
  const std::vector<ScoredSense> items{{{"a", "a.1"}, 0.9, 1},
                                       {{"a", "a.2"}, 0.1, 0},
                                       {{"a", "a.3"}, 0.95, 0}};
  const RelativeAucResult r = RelativeRocAuc(items, &lex);
  EXPECT_EQ(r.mean, 1.0);
  EXPECT_EQ(r.excluded_items, 1u);
  EXPECT_EQ(RelativeRocAuc(items).mean, 0.5);
}

TEST(F1Test, MatchesConfusionMatrix) {
  CounterRng rng(3);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng.Below(40);
    std::vector<double> s(n);
    std::vector<int> g(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = rng.Uniform();
      g[i] = static_cast<int>(rng.Below(2));
    }
    const double t = rng.Uniform();
    ASSERT_NEAR(F1Binary(s, g, t), ConfusionF1(s, g, t), 1e-12);
  }
  // Score equal to the threshold counts as metaphorical.
  EXPECT_EQ(F1Binary(std::vector<double>{0.5}, std::vector<int>{1}), 1.0);
  EXPECT_THROW(F1Binary(std::vector<double>{0.5}, std::vector<int>{1, 0}), DataError);
  EXPECT_THROW(F1Binary(std::vector<double>{}, std::vector<int>{}), DataError);
}

TEST(F1Test, MicroF1IsAccuracyForSingleLabels) {
  CounterRng rng(4);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 1 + rng.Below(30);
    std::vector<std::string> p(n), g(n);
    // Micro counts pooled over classes: tp = correct, fp = fn = wrong.
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = "s" + std::to_string(rng.Below(4));
      g[i] = "s" + std::to_string(rng.Below(4));
      if (p[i] == g[i]) {
        ++tp;
      } else {
        ++fp;
        ++fn;
      }
    }
    const double pr = static_cast<double>(tp) / (tp + fp), re = static_cast<double>(tp) / (tp + fn);
    const double f1 = tp == 0 ? 0.0 : 2 * pr * re / (pr + re);
    ASSERT_NEAR(MicroF1(p, g), f1, 1e-12);
  }
}

TEST(MetricTest, ConstantMajorityScoresGiveZeroF1AndHalfAuc) {
  CounterRng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<ScoredSense> items;
    std::vector<double> scores;
    std::vector<int> golds;
    for (int w = 0; w < 5; ++w) {
      for (int i = 0; i < 4; ++i) {
        const int gold = i == 0 ? 1 : i == 1 ? 0 : static_cast<int>(rng.Below(2));
        items.push_back({{"w" + std::to_string(w), std::to_string(i)}, 0.0, gold});
        scores.push_back(0.0);
        golds.push_back(gold);
      }
    }
    EXPECT_EQ(F1Binary(scores, golds), 0.0);
    EXPECT_EQ(RelativeRocAuc(items).mean, 0.5);
  }
}

// Exact two-tailed p over all 2^n swap patterns.
double ExactPermutationP(const std::vector<double>& a, const std::vector<double>& b,
                         const std::vector<int>& g, const PairedMetric& metric) {
  const double obs = metric(a, g) - metric(b, g);
  const std::size_t n = a.size();
  std::size_t hits = 0;
  for (std::size_t mask = 0; mask < (std::size_t{1} << n); ++mask) {
    std::vector<double> x = a, y = b;
    for (std::size_t i = 0; i < n; ++i) {
      if (mask >> i & 1) std::swap(x[i], y[i]);
    }
    if (std::abs(metric(x, g) - metric(y, g)) >= std::abs(obs) - 1e-12 * std::max(1.0, std::abs(obs))) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(std::size_t{1} << n);
}

PairedMetric F1Metric() {
  return [](std::span<const double> s, std::span<const int> g) { return F1Binary(s, g); };
}

TEST(PermutationTest, IdenticalSystemsGivePOne) {
  const std::vector<double> a{0.1, 0.7, 0.9, 0.4};
  const std::vector<int> g{0, 1, 1, 0};
  const auto r = PermutationTest(a, a, g, F1Metric(), 1000, 3);
  EXPECT_EQ(r.p_value, 1.0);
  EXPECT_EQ(r.observed_delta, 0.0);
  EXPECT_FALSE(r.significant_05);
}

TEST(PermutationTest, MinimumPValue) {
  // A perfect, B inverted: any swap strictly shrinks |delta| unless all swap.
  std::vector<double> a, b;
  std::vector<int> g;
  for (int i = 0; i < 40; ++i) {
    g.push_back(i % 2);
    a.push_back(i % 2 ? 0.9 : 0.1);
    b.push_back(i % 2 ? 0.1 : 0.9);
  }
  const auto r = PermutationTest(a, b, g, F1Metric(), 1000, 1);
  EXPECT_EQ(r.at_least_as_extreme, 0u);
  EXPECT_DOUBLE_EQ(r.p_value, 1.0 / 1001.0);
  EXPECT_TRUE(r.significant_01);
}

TEST(PermutationTest, ThreadCountIndependent) {
  CounterRng rng(6);
  std::vector<double> a(60), b(60);
  std::vector<int> g(60);
  for (std::size_t i = 0; i < 60; ++i) {
    a[i] = rng.Uniform();
    b[i] = rng.Uniform();
    g[i] = static_cast<int>(rng.Below(2));
  }
  const auto p = PermutationTest(a, b, g, F1Metric(), 500, 8, kernels::Exec::kParallel);
  const auto s = PermutationTest(a, b, g, F1Metric(), 500, 8, kernels::Exec::kSerial);
  EXPECT_EQ(p.p_value, s.p_value);
  EXPECT_EQ(p.at_least_as_extreme, s.at_least_as_extreme);
  EXPECT_THROW(PermutationTest(a, b, g, F1Metric(), 0, 8), ConfigError);
}

TEST(PermutationTest, MonteCarloAgreesWithExactEnumeration) {
  CounterRng rng(7);
  const std::size_t rounds = 1000;
  std::size_t outside = 0, total = 0;
  for (int c = 0; c < 10; ++c) {
    const std::size_t n = 4 + rng.Below(7);
    std::vector<double> a(n), b(n);
    std::vector<int> g(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = rng.Uniform();
      b[i] = rng.Uniform();
      g[i] = static_cast<int>(rng.Below(2));
    }
    const double exact = ExactPermutationP(a, b, g, F1Metric());
    // The estimator (1 + hits) / (r + 1) has mean (1 + r p) / (r + 1).
    const double mean_target = (1.0 + rounds * exact) / (rounds + 1.0);
    const double se = std::sqrt(exact * (1 - exact) / rounds);
    double sum = 0.0;
    for (std::uint64_t rep = 0; rep < 100; ++rep) {
      const double p = PermutationTest(a, b, g, F1Metric(), rounds, 1000 * c + rep).p_value;
      outside += std::abs(p - mean_target) > 3 * se + 1e-12;
      ++total;
      sum += p;
    }
    // Mean of 100 repetitions against its own standard error.
    EXPECT_LE(std::abs(sum / 100 - mean_target), 3 * se / 10 + 1e-12) << "case " << c;
  }
  // Single repetitions: 3 standard errors cover about 99.7%.
  EXPECT_LE(static_cast<double>(outside) / static_cast<double>(total), 0.01);
}

TEST(ConsistencyTest, HandComputedRates) {
  const Sense a{"w", "a"}, b{"w", "b"}, c{"v", "c"};
  // a: mixed predictions (inconsistent); b: all metaphorical; c: one token.
  const std::vector<Sense> senses{a, a, a, b, b, c};
  const std::vector<double> scores{0.9, 0.1, 0.8, 0.7, 0.6, 0.2};
  const ConsistencyResult r = ConsistencyAnalysis(senses, scores, 0.5, 2);
  EXPECT_EQ(r.considered, 2u);
  EXPECT_EQ(r.inconsistent, 1u);
  EXPECT_EQ(r.rate, 0.5);
  ASSERT_EQ(r.detail.size(), 2u);
  EXPECT_EQ(r.detail[0].sense, a);
  EXPECT_EQ(r.detail[0].predicted_metaphorical, 2u);
  EXPECT_TRUE(r.detail[0].inconsistent);
  EXPECT_FALSE(r.detail[1].inconsistent);
  const ConsistencyResult r3 = ConsistencyAnalysis(senses, scores, 0.5, 3);
  EXPECT_EQ(r3.considered, 1u);
  EXPECT_EQ(r3.rate, 1.0);
  EXPECT_THROW(ConsistencyAnalysis(senses, scores, 0.5, 15), DataError);
}

TEST(ConsistencyTest, MinCountFifteen) {
  std::vector<Sense> senses;
  std::vector<double> scores;
  for (int i = 0; i < 15; ++i) {
    senses.push_back({"w", "big"});
    scores.push_back(i == 7 ? 0.9 : 0.1);
    senses.push_back({"w", "mixed_small"});
    scores.push_back(0.1);
  }
  senses.push_back({"w", "tiny"});
  scores.push_back(0.1);
  senses.push_back({"w", "tiny"});
  scores.push_back(0.9);
  EXPECT_EQ(ConsistencyAnalysis(senses, scores, 0.5, 15).rate, 0.5);
  EXPECT_DOUBLE_EQ(ConsistencyAnalysis(senses, scores, 0.5, 2).rate, 2.0 / 3.0);
}

TEST(ConsistencyTest, ScorerOverload) {
  const Sense a{"w", "a"};
  std::vector<WsdExample> corpus;
  for (int i = 0; i < 3; ++i) corpus.push_back({Token{"c", "d", std::to_string(i), {"w"}, 0}, a});
  const TokenScorer scorer = [](const Token& t) { return t.sent_id == "0" ? 0.9 : 0.1; };
  EXPECT_EQ(ConsistencyAnalysis(scorer, corpus).rate, 1.0);
}

TEST(KappaTest, KnownValues) {
  const std::vector<std::string> a{"y", "y", "n", "n"}, b{"y", "n", "n", "n"};
  // po = 3/4, pe = (2/4)(1/4) + (2/4)(3/4) = 1/2.
  EXPECT_DOUBLE_EQ(CohenKappa(a, b), 0.5);
  EXPECT_EQ(CohenKappa(a, a), 1.0);
  const std::vector<std::string> same{"y", "y"};
  EXPECT_EQ(CohenKappa(same, same), 1.0);
  EXPECT_THROW(CohenKappa(a, same), DataError);
}

}  // namespace
}  // namespace mpd
