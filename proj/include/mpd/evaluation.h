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

#ifndef MPD_EVALUATION_H_
#define MPD_EVALUATION_H_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mpd/corpora.h"
#include "mpd/kernels.h"
#include "mpd/lexicon.h"
#include "mpd/models.h"

namespace mpd {

inline constexpr double kDefaultThreshold = 0.5;

// F1 of the positive (metaphorical) class with predictions score >= threshold.
// Zero when precision + recall is zero.
double F1Binary(std::span<const double> scores, std::span<const int> golds,
                double threshold = kDefaultThreshold);

// Micro-averaged F1 over sense classes. With one prediction and one gold
// label per item this equals accuracy.
double MicroF1(std::span<const std::string> predicted, std::span<const std::string> gold);

struct ScoredSense {
  Sense sense;
  double score = 0.0;
  int gold = 0;
};

// Probability that a random positive outranks a random negative, ties
// counted as half. Computed from midranks. Requires both classes.
double RankAuc(std::span<const double> scores, std::span<const int> golds);

struct WordformAuc {
  std::string wordform;
  double auc = 0.0;
  std::size_t positives = 0;
  std::size_t negatives = 0;
};

struct Exclusion {
  std::string item;
  std::string reason;
};

struct RelativeAucResult {
  double mean = 0.0;
  std::vector<WordformAuc> per_wordform;  // sorted by wordform
  std::vector<Exclusion> excluded;        // wordforms or senses left out
  std::size_t included_items = 0;
  std::size_t excluded_items = 0;
};

// Per-wordform ROC-AUC averaged over wordforms. Wordforms without both a
// metaphorical and a literal sense are excluded and listed; so are senses
// unknown to the lexicon when one is given. Throws DataError when nothing
// remains.
RelativeAucResult RelativeRocAuc(std::span<const ScoredSense> items,
                                 const Lexicon* lexicon = nullptr,
                                 kernels::Exec exec = kernels::Exec::kParallel);

// Metric over one system's per-item scores; the golds are those passed to
// PermutationTest. Called concurrently from worker threads, so it must not
// mutate shared state.
using PairedMetric =
    std::function<double(std::span<const double> scores, std::span<const int> golds)>;

struct PermutationResult {
  double p_value = 1.0;
  double observed_delta = 0.0;  // metric(A) - metric(B)
  std::size_t rounds = 0;
  std::size_t at_least_as_extreme = 0;
  bool significant_05 = false;
  bool significant_01 = false;
  std::uint64_t seed = 0;
};

// Two-tailed Monte Carlo paired permutation test. Each round swaps every
// item's A and B scores independently with probability 1/2; the p-value is
// (1 + #{|delta_perm| >= |delta_obs|}) / (rounds + 1). Round r draws from
// stream r of the seed, so the result is independent of the thread count.
PermutationResult PermutationTest(std::span<const double> a, std::span<const double> b,
                                  std::span<const int> golds, const PairedMetric& metric,
                                  std::size_t rounds = 1000, std::uint64_t seed = 0,
                                  kernels::Exec exec = kernels::Exec::kParallel);

struct SenseConsistency {
  Sense sense;
  std::size_t count = 0;
  std::size_t predicted_metaphorical = 0;
  bool inconsistent = false;
};

struct ConsistencyResult {
  double rate = 0.0;
  std::size_t considered = 0;
  std::size_t inconsistent = 0;
  std::vector<SenseConsistency> detail;  // qualifying senses, sorted
};

// Groups tokens by gold sense; among senses with at least min_count tokens, a
// sense is inconsistent when its thresholded predictions include both classes.
ConsistencyResult ConsistencyAnalysis(std::span<const Sense> gold_senses,
                                      std::span<const double> scores,
                                      double threshold = kDefaultThreshold,
                                      std::size_t min_count = 2);
ConsistencyResult ConsistencyAnalysis(const TokenScorer& scorer,
                                      std::span<const WsdExample> corpus,
                                      double threshold = kDefaultThreshold,
                                      std::size_t min_count = 2);

// Cohen's kappa with chance agreement from the product of marginals; 1 when
// both observed and chance agreement are 1.
double CohenKappa(std::span<const std::string> a, std::span<const std::string> b);

}  // namespace mpd

#endif  // MPD_EVALUATION_H_
