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

#include "mpd/evaluation.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "mpd/error.h"
#include "mpd/rng.h"

namespace mpd {

namespace {

void CheckAligned(std::size_t a, std::size_t b, const char* op) {
  if (a != b) {
    throw DataError(std::string(op) + ": length mismatch (" + std::to_string(a) + " vs " +
                    std::to_string(b) + ")");
  }
  if (a == 0) throw DataError(std::string(op) + ": empty input");
}

}  // namespace

double F1Binary(std::span<const double> scores, std::span<const int> golds, double threshold) {
  CheckAligned(scores.size(), golds.size(), "f1_binary");
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool pred = scores[i] >= threshold;
    const bool gold = golds[i] != 0;
    tp += pred && gold;
    fp += pred && !gold;
    fn += !pred && gold;
  }
  if (tp == 0) return 0.0;  // P + R == 0 whenever tp == 0
  const double p = static_cast<double>(tp) / static_cast<double>(tp + fp);
  const double r = static_cast<double>(tp) / static_cast<double>(tp + fn);
  return 2.0 * p * r / (p + r);
}

double MicroF1(std::span<const std::string> predicted, std::span<const std::string> gold) {
  CheckAligned(predicted.size(), gold.size(), "micro_f1");
  // Each item contributes one predicted and one gold label, so micro P, R and
  // F1 all collapse to accuracy.
  std::size_t correct = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) correct += predicted[i] == gold[i];
  return static_cast<double>(correct) / static_cast<double>(gold.size());
}

double RankAuc(std::span<const double> scores, std::span<const int> golds) {
  CheckAligned(scores.size(), golds.size(), "roc_auc");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] < scores[b];
  });
  // Twice the rank sum keeps midranks integral.
  std::uint64_t pos = 0, twice_rank_sum = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const std::uint64_t twice_mid = i + 1 + j;  // ranks i+1 .. j
    for (std::size_t t = i; t < j; ++t) {
      if (golds[order[t]] != 0) {
        ++pos;
        twice_rank_sum += twice_mid;
      }
    }
    i = j;
  }
  const std::uint64_t neg = n - pos;
  if (pos == 0 || neg == 0) throw DataError("roc_auc: needs both classes");
  // U = R - pos(pos+1)/2, counted in half units.
  const std::uint64_t twice_u = twice_rank_sum - pos * (pos + 1);
  return static_cast<double>(twice_u) / (2.0 * static_cast<double>(pos * neg));
}

RelativeAucResult RelativeRocAuc(std::span<const ScoredSense> items, const Lexicon* lexicon,
                                 kernels::Exec exec) {
  if (items.empty()) throw DataError("relative_roc_auc: empty input");
  RelativeAucResult out;
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < items.size(); ++i) {
    const ScoredSense& s = items[i];
    if (!(s.score >= 0.0 && s.score <= 1.0)) {
      throw DataError("relative_roc_auc: score " + std::to_string(s.score) + " for " +
                      s.sense.wordform + "/" + s.sense.definition_id + " outside [0, 1]");
    }
    if (lexicon != nullptr && !lexicon->SenseIndex(s.sense)) {
      out.excluded.push_back({s.sense.wordform + "/" + s.sense.definition_id,
                              "sense not in lexicon"});
      ++out.excluded_items;
      continue;
    }
    groups[s.sense.wordform].push_back(i);
  }

  std::vector<std::pair<std::string, std::vector<std::size_t>>> included;
  for (auto& [wordform, idx] : groups) {
    std::size_t pos = 0;
    for (std::size_t i : idx) pos += items[i].gold != 0;
    if (pos == 0 || pos == idx.size()) {
      out.excluded.push_back({wordform, pos == 0 ? "no metaphorical sense" : "no literal sense"});
      out.excluded_items += idx.size();
      continue;
    }
    out.included_items += idx.size();
    included.emplace_back(wordform, std::move(idx));
  }
  if (included.empty()) throw DataError("relative_roc_auc: every wordform was excluded");

  out.per_wordform.resize(included.size());
  const auto n = static_cast<std::ptrdiff_t>(included.size());
  auto one = [&](std::ptrdiff_t g) {
    const auto& idx = included[g].second;
    std::vector<double> scores;
    std::vector<int> golds;
    for (std::size_t i : idx) {
      scores.push_back(items[i].score);
      golds.push_back(items[i].gold != 0);
    }
    WordformAuc w;
    w.wordform = included[g].first;
    w.positives = static_cast<std::size_t>(std::count(golds.begin(), golds.end(), 1));
    w.negatives = golds.size() - w.positives;
    w.auc = RankAuc(scores, golds);
    out.per_wordform[g] = std::move(w);
  };
  if (exec == kernels::Exec::kParallel && n > 1) {
#pragma omp parallel for schedule(dynamic, 16)
    for (std::ptrdiff_t g = 0; g < n; ++g) one(g);
  } else {
    for (std::ptrdiff_t g = 0; g < n; ++g) one(g);
  }
  double sum = 0.0;
  for (const auto& w : out.per_wordform) sum += w.auc;
  out.mean = sum / static_cast<double>(out.per_wordform.size());
  return out;
}

PermutationResult PermutationTest(std::span<const double> a, std::span<const double> b,
                                  std::span<const int> golds, const PairedMetric& metric,
                                  std::size_t rounds, std::uint64_t seed, kernels::Exec exec) {
  CheckAligned(a.size(), b.size(), "permutation_test");
  CheckAligned(a.size(), golds.size(), "permutation_test");
  if (rounds == 0) throw ConfigError("permutation_test: rounds must be positive");

  PermutationResult res;
  res.rounds = rounds;
  res.seed = seed;
  res.observed_delta = metric(a, golds) - metric(b, golds);
  const double observed = std::abs(res.observed_delta);
  // Relative slack absorbs rounding when a permuted delta equals the observed
  // one up to summation order.
  const double bar = observed - 1e-12 * std::max(1.0, observed);
  const CounterRng root(seed);
  const std::size_t n = a.size();

  auto round_hit = [&](std::size_t r, std::vector<double>& pa, std::vector<double>& pb) {
    CounterRng rng = root.Split(static_cast<std::uint64_t>(r));
    for (std::size_t i = 0; i < n; ++i) {
      const bool swap = rng.Bernoulli(0.5);
      pa[i] = swap ? b[i] : a[i];
      pb[i] = swap ? a[i] : b[i];
    }
    return std::abs(metric(pa, golds) - metric(pb, golds)) >= bar;
  };

  std::size_t hits = 0;
  if (exec == kernels::Exec::kParallel) {
    const auto total = static_cast<std::ptrdiff_t>(rounds);
#pragma omp parallel reduction(+ : hits)
    {
      std::vector<double> pa(n), pb(n);
#pragma omp for schedule(static)
      for (std::ptrdiff_t r = 0; r < total; ++r) {
        hits += round_hit(static_cast<std::size_t>(r), pa, pb) ? 1 : 0;
      }
    }
  } else {
    std::vector<double> pa(n), pb(n);
    for (std::size_t r = 0; r < rounds; ++r) hits += round_hit(r, pa, pb) ? 1 : 0;
  }
  res.at_least_as_extreme = hits;
  res.p_value = static_cast<double>(1 + hits) / static_cast<double>(rounds + 1);
  res.significant_05 = res.p_value < 0.05;
  res.significant_01 = res.p_value < 0.01;
  return res;
}

ConsistencyResult ConsistencyAnalysis(std::span<const Sense> gold_senses,
                                      std::span<const double> scores, double threshold,
                                      std::size_t min_count) {
  CheckAligned(gold_senses.size(), scores.size(), "consistency_analysis");
  std::map<Sense, SenseConsistency> by_sense;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    SenseConsistency& c = by_sense[gold_senses[i]];
    c.sense = gold_senses[i];
    ++c.count;
    c.predicted_metaphorical += scores[i] >= threshold;
  }
  ConsistencyResult out;
  for (auto& [sense, c] : by_sense) {
    if (c.count < min_count) continue;
    c.inconsistent = c.predicted_metaphorical != 0 && c.predicted_metaphorical != c.count;
    ++out.considered;
    out.inconsistent += c.inconsistent;
    out.detail.push_back(c);
  }
  if (out.considered == 0) {
    throw DataError("consistency_analysis: no sense has at least " + std::to_string(min_count) +
                    " tokens");
  }
  out.rate = static_cast<double>(out.inconsistent) / static_cast<double>(out.considered);
  return out;
}

ConsistencyResult ConsistencyAnalysis(const TokenScorer& scorer,
                                      std::span<const WsdExample> corpus, double threshold,
                                      std::size_t min_count) {
  if (corpus.empty()) throw DataError("consistency_analysis: empty corpus");
  std::vector<Sense> senses;
  std::vector<double> scores;
  for (const WsdExample& ex : corpus) {
    senses.push_back(ex.gold);
    scores.push_back(scorer(ex.token));
  }
  return ConsistencyAnalysis(senses, scores, threshold, min_count);
}

double CohenKappa(std::span<const std::string> a, std::span<const std::string> b) {
  CheckAligned(a.size(), b.size(), "cohen_kappa");
  const double n = static_cast<double>(a.size());
  std::map<std::string, std::pair<double, double>> marginals;
  double agree = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    marginals[a[i]].first += 1.0;
    marginals[b[i]].second += 1.0;
    agree += a[i] == b[i];
  }
  const double po = agree / n;
  double pe = 0.0;
  for (const auto& [label, m] : marginals) pe += (m.first / n) * (m.second / n);
  if (pe == 1.0) return po == 1.0 ? 1.0 : 0.0;
  return (po - pe) / (1.0 - pe);
}

}  // namespace mpd
