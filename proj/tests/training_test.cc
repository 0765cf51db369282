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
#include <set>

#include "mpd/error.h"
#include "mpd/evaluation.h"
#include "mpd/training.h"
#include "testing.h"

namespace mpd {
namespace {

using testing::SmallWorld;

// Fast config that reaches both patience exhaustions within a few hundred
// steps on the small world.
TrainConfig QuickConfig(std::uint64_t seed) {
  TrainConfig c;
  c.theta = {2, 16};
  c.phi = {1, 0};
  c.learning_rate = 0.01;
  c.lr_divisor = 10;
  c.batch_size = 16;
  c.check_interval = 5;
  c.patience = 2;
  c.seed = seed;
  c.max_steps = 3000;
  return c;
}

std::vector<Matrix> Copy(const std::vector<ParamRef>& params) {
  std::vector<Matrix> out;
  for (const ParamRef& p : params) out.push_back(*p.value);
  return out;
}

std::vector<Matrix> PhiOf(const ModelBundle& b) {
  return Copy(const_cast<ModelBundle&>(b).Params(ParamGroup::kPhi));
}

class TrainerStateMachineTest : public ::testing::Test {
 protected:
  void SetUp() override { world_ = SmallWorld(21, 8, 120); }
  SyntheticBenchmark world_;
};

TEST_F(TrainerStateMachineTest, FreezesPhiDividesLrRestoresAndHalts) {
  const TrainConfig config = QuickConfig(3);
  std::vector<Matrix> phi_at_transition;
  std::size_t phase2_steps = 0;
  bool phi_changed = false;
  double lr_phase1 = 0, lr_phase2 = 0;
  TrainOptions options;
  options.observer = [&](const TrainEvent& e) {
    if (e.kind == TrainEventKind::kPhaseTransition) {
      phi_at_transition = PhiOf(*e.bundle);
      lr_phase2 = e.learning_rate;
    } else if (e.kind == TrainEventKind::kStep && e.phase == 1) {
      lr_phase1 = e.learning_rate;
    } else if (e.kind == TrainEventKind::kStep && e.phase == 2) {
      ++phase2_steps;
      phi_changed = phi_changed || PhiOf(*e.bundle) != phi_at_transition;
    }
  };
  const TrainResult r = Train(config, world_.Data(), world_.store, world_.lexicon, options);
  const TrainReport& rep = r.report;
  ASSERT_TRUE(rep.phase_transition_step.has_value()) << "no first exhaustion within max_steps";
  EXPECT_EQ(rep.stop_reason, "second patience exhaustion");
  EXPECT_GT(phase2_steps, 0u);
  EXPECT_FALSE(phi_changed);
  EXPECT_EQ(PhiOf(r.bundle), phi_at_transition);
  EXPECT_EQ(lr_phase1, 0.01);
  EXPECT_EQ(lr_phase2, 0.01 / 10);
  EXPECT_EQ(rep.learning_rate[1], rep.learning_rate[0] / 10);
  ASSERT_TRUE(rep.phase1_restored_dev_loss && rep.best_dev_loss[0]);
  EXPECT_NEAR(*rep.phase1_restored_dev_loss, *rep.best_dev_loss[0], 1e-12);
  // Phase 2 halts exactly patience checks after its last improvement.
  std::size_t trailing = 0;
  for (auto it = rep.checks.rbegin(); it != rep.checks.rend() && !it->improved && it->phase == 2; ++it) {
    ++trailing;
  }
  EXPECT_EQ(trailing, config.patience);
  // The returned model is the phase-2 best.
  const double final_loss = DevLoss(r.bundle, config, 2, world_.Data(), world_.store, world_.lexicon);
  EXPECT_NEAR(final_loss, *rep.best_dev_loss[1], 1e-12);
}

TEST_F(TrainerStateMachineTest, PhaseOneHaltsExactlyAtPatience) {
  const TrainConfig config = QuickConfig(4);
  const TrainReport rep = Train(config, world_.Data(), world_.store, world_.lexicon).report;
  ASSERT_TRUE(rep.phase_transition_step);
  std::size_t since_best = 0;
  for (const DevCheck& c : rep.checks) {
    if (c.phase != 1) break;
    since_best = c.improved ? 0 : since_best + 1;
    if (c.step < *rep.phase_transition_step) {
      EXPECT_LT(since_best, config.patience);
    }
  }
  EXPECT_EQ(since_best, config.patience);
  EXPECT_EQ(rep.checks.front().step, config.check_interval);
  EXPECT_TRUE(rep.checks.front().improved);
}

TEST_F(TrainerStateMachineTest, BitwiseReproducible) {
  const TrainConfig config = QuickConfig(5);
  TrainResult a = Train(config, world_.Data(), world_.store, world_.lexicon);
  TrainResult b = Train(config, world_.Data(), world_.store, world_.lexicon);
  EXPECT_EQ(a.report.ToJson().dump(), b.report.ToJson().dump());
  EXPECT_EQ(Copy(a.bundle.AllParams()), Copy(b.bundle.AllParams()));
  EXPECT_EQ(a.rng_state, b.rng_state);
  TrainConfig other = config;
  other.seed = 6;
  TrainResult c = Train(other, world_.Data(), world_.store, world_.lexicon);
  EXPECT_NE(Copy(a.bundle.AllParams()), Copy(c.bundle.AllParams()));
}

TEST_F(TrainerStateMachineTest, EvaluationDoesNotPerturbTraining) {
  TrainConfig config = QuickConfig(7);
  config.max_steps = 200;
  TrainOptions probe;
  probe.probe_interval = 3;
  TrainResult a = Train(config, world_.Data(), world_.store, world_.lexicon);
  TrainResult b = Train(config, world_.Data(), world_.store, world_.lexicon, probe);
  EXPECT_EQ(Copy(a.bundle.AllParams()), Copy(b.bundle.AllParams()));
  EXPECT_EQ(a.report.ToJson().dump(), b.report.ToJson().dump());
}

TEST_F(TrainerStateMachineTest, SerialAndParallelKernelsAgree) {
  TrainConfig config = QuickConfig(8);
  config.max_steps = 100;
  config.batch_size = 64;
  config.theta = {2, 300};
  TrainOptions serial;
  serial.exec = kernels::Exec::kSerial;
  TrainResult a = Train(config, world_.Data(), world_.store, world_.lexicon);
  TrainResult b = Train(config, world_.Data(), world_.store, world_.lexicon, serial);
  EXPECT_EQ(Copy(a.bundle.AllParams()), Copy(b.bundle.AllParams()));
}

TEST_F(TrainerStateMachineTest, MaxStepsRestoresBest) {
  TrainConfig config = QuickConfig(9);
  config.max_steps = 40;
  config.patience = 100;
  const TrainResult r = Train(config, world_.Data(), world_.store, world_.lexicon);
  EXPECT_EQ(r.report.stop_reason, "max_steps");
  EXPECT_EQ(r.report.steps, 40u);
  EXPECT_FALSE(r.report.phase_transition_step);
  EXPECT_NEAR(DevLoss(r.bundle, config, 1, world_.Data(), world_.store, world_.lexicon),
              *r.report.best_dev_loss[0], 1e-12);
  ASSERT_TRUE(r.report.smd_train_f1 && r.report.wsd_dev_micro_f1);
}

TEST_F(TrainerStateMachineTest, AlphaZeroLeavesMpdUntouched) {
  TrainConfig config = QuickConfig(10);
  config.alpha = 0.0;
  config.max_steps = 30;
  const ModelBundle initial =
      BuildBundle(config.Spec(8), world_.store, world_.lexicon, CounterRng(config.seed).Split("init"));
  const TrainResult r = Train(config, world_.Data(), world_.store, world_.lexicon);
  EXPECT_EQ(Copy(const_cast<ModelBundle&>(initial).Params(ParamGroup::kTheta)),
            Copy(const_cast<ModelBundle&>(r.bundle).Params(ParamGroup::kTheta)));
  EXPECT_NE(PhiOf(initial), PhiOf(r.bundle));
}

TEST_F(TrainerStateMachineTest, TrainsEveryTrainableKind) {
  for (ModelKind kind : {ModelKind::kWsdBaseline, ModelKind::kEwiser, ModelKind::kSmdBaseline,
                         ModelKind::kMelbert}) {
    TrainConfig config = QuickConfig(11);
    config.model = kind;
    config.max_steps = 300;
    const TrainResult r = Train(config, world_.Data(), world_.store, world_.lexicon);
    EXPECT_FALSE(r.report.checks.empty()) << ModelKindName(kind);
    const bool smd = kind == ModelKind::kSmdBaseline || kind == ModelKind::kMelbert;
    EXPECT_EQ(r.report.smd_dev_f1.has_value(), smd);
    EXPECT_EQ(r.report.wsd_dev_micro_f1.has_value(), !smd);
    if (r.report.phase_transition_step) {
      EXPECT_EQ(r.report.learning_rate[1], r.report.learning_rate[0] / config.lr_divisor);
    }
  }
  TrainConfig mpd = QuickConfig(1);
  mpd.model = ModelKind::kMpd;
  EXPECT_THROW(Train(mpd, world_.Data(), world_.store, world_.lexicon), ConfigError);
}

TEST(TrainerDataTest, SkipsExamplesWithoutEmbeddingsAndCounts) {
  SyntheticBenchmark w = SmallWorld(22, 6, 40);
  std::vector<SmdExample> smd = w.smd_train;
  smd.push_back({Token{"new", "d", "s", {"w00"}, 0}, 1, std::nullopt});       // no TOKEN vector
  smd.push_back({Token{"new", "d", "t", {"unknown"}, 0}, 0, std::nullopt});  // not in lexicon
  TrainConfig c = QuickConfig(1);
  c.max_steps = 5;
  TrainData data = w.Data();
  data.smd_train = smd;
  const TrainResult r = Train(c, data, w.store, w.lexicon);
  std::size_t total = 0;
  for (const auto& [reason, n] : r.report.skipped) {
    EXPECT_EQ(reason.rfind("smd_train: ", 0), 0u) << reason;
    total += n;
  }
  EXPECT_EQ(total, 2u);
  TrainData empty = w.Data();
  empty.smd_dev = {};
  EXPECT_THROW(Train(c, empty, w.store, w.lexicon), DataError);
}

TEST(LossTest, JointWeighting) {
  EXPECT_DOUBLE_EQ(LossJoint(0.8, 2.0, 3.0), 0.8 * 2.0 + 0.2 * 3.0);
  EXPECT_EQ(LossJoint(1.0, 2.0, 3.0), 2.0);
  EXPECT_EQ(LossJoint(0.0, 2.0, 3.0), 3.0);
  EXPECT_THROW(LossJoint(1.5, 1, 1), ConfigError);
  EXPECT_THROW(LossJoint(-0.1, 1, 1), ConfigError);
}

TEST(LossTest, SmdAndWsdLossesMatchScoresAndGradients) {
  const SyntheticBenchmark w = SmallWorld(23);
  ModelBundle b = BuildBundle(testing::SmallSpec(ModelKind::kCombined, 8, 0.0), w.store,
                              w.lexicon, CounterRng(2));
  const std::span<const SmdExample> smd(w.smd_train.data(), 6);
  const LossOutput ls = LossSmd(*b.mpd, *b.wsd, w.store, w.lexicon, smd);
  double expected = 0.0;
  for (const SmdExample& ex : smd) {
    const double p = CombinedSmdScore(*b.mpd, *b.wsd, w.store, w.lexicon, ex.token);
    expected -= ex.label ? std::log(p) : std::log(1 - p);
  }
  EXPECT_NEAR(ls.value, expected / 6, 1e-12);
  EXPECT_EQ(ls.grads.size(), b.AllParams().size());

  const std::span<const WsdExample> wsd(w.wsd_train.data(), 6);
  const LossOutput lw = LossWsd(*b.wsd, w.store, w.lexicon, wsd);
  double nll = 0.0;
  for (const WsdExample& ex : wsd) {
    const auto cands = CandidateSenses(w.lexicon, ex.token.wordform());
    const auto p = WsdScores(*b.wsd, w.store, w.lexicon, ex.token, cands);
    for (std::size_t i = 0; i < cands.size(); ++i) {
      if (cands[i] == ex.gold) nll -= std::log(p[i]);
    }
  }
  EXPECT_NEAR(lw.value, nll / 6, 1e-12);

  // Gradient of one coordinate by central differences.
  Matrix& w0 = b.mpd->mlp.layers[0].weight;
  const double h = 1e-6, saved = w0[3];
  w0[3] = saved + h;
  const double up = LossSmd(*b.mpd, *b.wsd, w.store, w.lexicon, smd).value;
  w0[3] = saved - h;
  const double down = LossSmd(*b.mpd, *b.wsd, w.store, w.lexicon, smd).value;
  w0[3] = saved;
  EXPECT_NEAR(ls.grads.at(&w0)[3], (up - down) / (2 * h), 1e-7);

  std::vector<WsdExample> bad{w.wsd_train[0]};
  bad[0].gold.definition_id = "nonexistent.n.01";
  EXPECT_THROW(LossWsd(*b.wsd, w.store, w.lexicon, bad), DataError);
}

TEST(TrainConfigTest, SetValidateAndJson) {
  TrainConfig c;
  c.Set("alpha", "0.4");
  c.Set("n_theta", "3");
  c.Set("h_theta", "100");
  c.Set("wsd", "ewiser");
  c.Set("model", "melbert");
  c.Set("lr", "0.0005");
  EXPECT_EQ(c.alpha, 0.4);
  EXPECT_EQ(c.theta, (ArchConfig{3, 100}));
  EXPECT_EQ(c.wsd, WsdKind::kEwiser);
  EXPECT_EQ(c.model, ModelKind::kMelbert);
  EXPECT_EQ(TrainConfig::FromJson(c.ToJson()), c);
  EXPECT_THROW(c.Set("nope", "1"), ConfigError);
  EXPECT_THROW(c.Set("alpha", "abc"), ConfigError);
  EXPECT_THROW(c.Set("batch_size", "-3"), ConfigError);
  c.alpha = 1.2;
  EXPECT_THROW(c.Validate(), ConfigError);
  EXPECT_EQ(TrainConfig::Keys().size(), 19u);
}

TEST(TrainConfigTest, DefaultsFollowTheOptimizerSettings) {
  const TrainConfig c;
  EXPECT_EQ(c.learning_rate, 1e-3);
  EXPECT_EQ(c.Optimizer().beta1, 0.9);
  EXPECT_EQ(c.Optimizer().beta2, 0.999);
  EXPECT_EQ(c.Optimizer().eps, 1e-8);
  EXPECT_EQ(c.Optimizer().weight_decay, 0.01);
  EXPECT_EQ(c.alpha, 0.8);
  EXPECT_NO_THROW(c.Validate());
}

TEST(SearchTest, SamplesPerAlphaFromTheGrid) {
  const SearchSpace space;
  TrainConfig base;
  base.max_steps = 7;
  const auto configs = SampleSearchConfigs(space, 20, base, 99);
  ASSERT_EQ(configs.size(), 120u);
  std::set<std::uint64_t> seeds;
  for (std::size_t i = 0; i < configs.size(); ++i) {
    const TrainConfig& c = configs[i];
    EXPECT_EQ(c.alpha, space.alpha[i / 20]);
    EXPECT_NE(std::find(space.layers.begin(), space.layers.end(), c.theta.layers), space.layers.end());
    EXPECT_NE(std::find(space.hidden.begin(), space.hidden.end(), c.phi.hidden), space.hidden.end());
    EXPECT_NE(std::find(space.dropout.begin(), space.dropout.end(), c.dropout), space.dropout.end());
    EXPECT_NE(std::find(space.learning_rate.begin(), space.learning_rate.end(), c.learning_rate),
              space.learning_rate.end());
    EXPECT_EQ(c.max_steps, 7u);
    seeds.insert(c.seed);
  }
  EXPECT_EQ(seeds.size(), 120u);
  const auto again = SampleSearchConfigs(space, 20, base, 99);
  EXPECT_EQ(again, configs);
  EXPECT_NE(SampleSearchConfigs(space, 20, base, 100), configs);
  // Growing the per-alpha count keeps earlier draws of the first alpha.
  EXPECT_EQ(SampleSearchConfigs(space, 3, base, 99)[0], configs[0]);
}

TEST(SearchTest, RunsAreReproducibleAndMatchSingleTraining) {
  const SyntheticBenchmark w = SmallWorld(24, 6, 60);
  SearchSpace space;
  space.layers = {1, 2};
  space.hidden = {8};
  space.alpha = {0.5, 1.0};
  TrainConfig base = QuickConfig(0);
  base.max_steps = 30;
  const auto runs = HyperparamSearch(space, 2, base, 5, w.Data(), w.store, w.lexicon);
  ASSERT_EQ(runs.size(), 4u);
  const auto again = HyperparamSearch(space, 2, base, 5, w.Data(), w.store, w.lexicon, 3);
  ASSERT_EQ(again.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(again[i].report.ToJson().dump(), runs[i].report.ToJson().dump());
  }
  const TrainReport single = Train(runs[1].config, w.Data(), w.store, w.lexicon).report;
  EXPECT_EQ(single.ToJson().dump(), runs[1].report.ToJson().dump());
}

TEST(SelectionTest, ArgmaxWithLowestIndexTies) {
  std::vector<TrainReport> r(3);
  r[0].smd_dev_f1 = 0.5;
  r[0].wsd_dev_micro_f1 = 0.8;
  r[1].smd_dev_f1 = 0.7;
  r[1].wsd_dev_micro_f1 = 0.7;
  r[2].smd_dev_f1 = 0.7;
  r[2].wsd_dev_micro_f1 = 0.5;
  Selection s = SelectModel(r, SelectionCriterion::kSmdDevF1);
  EXPECT_EQ(s.index, 1u);
  EXPECT_TRUE(s.tie);
  s = SelectModel(r, SelectionCriterion::kWsdDevMicroF1);
  EXPECT_EQ(s.index, 0u);
  EXPECT_FALSE(s.tie);
  s = SelectModel(r, SelectionCriterion::kMeanSmdWsd);
  EXPECT_EQ(s.index, 1u);
  EXPECT_DOUBLE_EQ(s.value, 0.7);
  EXPECT_EQ(ParseSelectionCriterion("mean_smd_wsd"), SelectionCriterion::kMeanSmdWsd);
  EXPECT_THROW(ParseSelectionCriterion("loss"), ConfigError);
  EXPECT_THROW(SelectModel({}, SelectionCriterion::kSmdDevF1), DataError);
  r[2].smd_dev_f1.reset();
  EXPECT_THROW(SelectModel(r, SelectionCriterion::kSmdDevF1), DataError);
}

}  // namespace
}  // namespace mpd
