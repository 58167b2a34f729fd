#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "easycore/checkpoint.hpp"
#include "easycore/data.hpp"
#include "easycore/error.hpp"
#include "easycore/model.hpp"
#include "easycore/rng.hpp"
#include "easycore/train.hpp"

using namespace easycore;

namespace {

SchedulerSpec multistep(std::vector<std::size_t> milestones, double gamma) {
  SchedulerSpec s;
  s.kind = SchedulerKind::multistep;
  s.milestones = std::move(milestones);
  s.gamma = gamma;
  return s;
}

// Two tight clusters far apart: separable with a wide margin.
Dataset separable(std::uint64_t seed, std::size_t per_class = 40) {
  ClusterConfig cfg;
  cfg.centers = {{-3.0, 0.0}, {3.0, 0.0}};
  cfg.train_counts = {per_class, per_class};
  cfg.test_counts = {1, 1};
  cfg.stds = {0.4, 0.4};
  cfg.class_of_cluster = {0, 1};
  return generate_clusters(cfg, seed).train;
}

TrainConfig small_config(std::size_t epochs) {
  TrainConfig c;
  c.epochs = epochs;
  c.batch_size = 16;
  c.initial_lr = 0.05;
  c.momentum = 0.9;
  c.weight_decay = 5e-4;
  c.scheduler.kind = SchedulerKind::cosine;
  c.scheduler.t_max = std::max<std::size_t>(1, epochs);
  c.seed = 5;
  return c;
}

void expect_same_parameters(const Model& a, const Model& b) {
  ASSERT_EQ(a.parameters().size(), b.parameters().size());
  for (std::size_t i = 0; i < a.parameters().size(); ++i) {
    const auto va = a.parameters()[i].tensor.values();
    const auto vb = b.parameters()[i].tensor.values();
    for (std::size_t k = 0; k < va.size(); ++k) ASSERT_EQ(va[k], vb[k]) << a.parameters()[i].name << "[" << k << "]";
  }
}

}  // namespace

TEST(Scheduler, MultistepMilestones) {
  const auto s = multistep({75, 90}, 0.1);
  EXPECT_EQ(lr_at(s, 0.1, 0), 0.1);
  EXPECT_EQ(lr_at(s, 0.1, 74), 0.1);
  EXPECT_EQ(lr_at(s, 0.1, 75), 0.01);
  EXPECT_EQ(lr_at(s, 0.1, 89), 0.01);
  EXPECT_EQ(lr_at(s, 0.1, 90), 0.001);
  EXPECT_EQ(lr_at(s, 0.1, 95), 0.001);
}

TEST(Scheduler, StepDrop) {
  SchedulerSpec s;
  s.kind = SchedulerKind::step;
  s.step_size = 30;
  s.gamma = 0.1;
  EXPECT_EQ(lr_at(s, 0.1, 29), 0.1);
  EXPECT_EQ(lr_at(s, 0.1, 30), 0.01);
  EXPECT_EQ(lr_at(s, 0.1, 60), 0.001);
}

TEST(Scheduler, CosineEndpointsAndMidpoint) {
  SchedulerSpec s;
  s.kind = SchedulerKind::cosine;
  s.t_max = 300;
  EXPECT_EQ(lr_at(s, 0.1, 0), 0.1);
  EXPECT_NEAR(lr_at(s, 0.1, 150), 0.05, 1e-17);
  s.eta_min = 0.01;
  EXPECT_NEAR(lr_at(s, 0.1, 300), 0.01, 1e-17);
}

TEST(Scheduler, NonIntegralInverseGammaUsesPower) {
  const auto s = multistep({2, 4}, 0.3);
  EXPECT_DOUBLE_EQ(lr_at(s, 1.0, 3), 0.3);
  EXPECT_DOUBLE_EQ(lr_at(s, 1.0, 5), 0.09);
}

TEST(Scheduler, NonIncreasingForAllKinds) {
  CounterRng rng(1);
  for (int trial = 0; trial < 30; ++trial) {
    SchedulerSpec specs[3];
    specs[0] = multistep({1 + rng.below(10), 20 + rng.below(10), 40 + rng.below(10)}, rng.uniform(0.05, 1.0));
    specs[1].kind = SchedulerKind::step;
    specs[1].step_size = 1 + rng.below(20);
    specs[1].gamma = rng.uniform(0.05, 1.0);
    specs[2].kind = SchedulerKind::cosine;
    specs[2].t_max = 60;
    specs[2].eta_min = rng.uniform(0.0, 0.05);
    for (const auto& s : specs) {
      double prev = lr_at(s, 0.1, 0);
      for (std::size_t e = 1; e < 60; ++e) {
        const double cur = lr_at(s, 0.1, e);
        EXPECT_LE(cur, prev) << to_string(s.kind) << " epoch " << e;
        prev = cur;
      }
    }
  }
}

TEST(Scheduler, InvalidSpecsRejected) {
  EXPECT_THROW(multistep({10, 10}, 0.1).validate(), ValidationError);
  EXPECT_THROW(multistep({20, 10}, 0.1).validate(), ValidationError);
  EXPECT_THROW(multistep({10}, 0.0).validate(), ValidationError);
  EXPECT_THROW(multistep({10}, 1.5).validate(), ValidationError);
  EXPECT_THROW(parse_scheduler_kind("exponential"), ValidationError);
  for (auto k : {SchedulerKind::multistep, SchedulerKind::cosine, SchedulerKind::step})
    EXPECT_EQ(parse_scheduler_kind(to_string(k)), k);
}

TEST(Sgd, VanillaStep) {
  Model m = build_model(ModelConfig{1, 1, 0, 2}, 0);
  std::vector<std::vector<double>> g;
  std::vector<std::vector<double>> before;
  for (const auto& p : m.parameters()) {
    g.emplace_back(p.tensor.numel(), 0.5);
    before.emplace_back(p.tensor.values().begin(), p.tensor.values().end());
  }
  std::vector<std::span<const double>> spans(g.begin(), g.end());
  SgdState state;
  sgd_step(m, spans, 0.1, 0.0, 0.0, state);
  for (std::size_t i = 0; i < before.size(); ++i)
    for (std::size_t k = 0; k < before[i].size(); ++k)
      EXPECT_EQ(m.parameters()[i].tensor.values()[k], before[i][k] - 0.1 * 0.5);
}

TEST(Sgd, PureDecayWithZeroGradient) {
  Model m = build_model(ModelConfig{1, 2, 0, 2}, 3);
  std::vector<std::vector<double>> before;
  for (const auto& p : m.parameters()) before.emplace_back(p.tensor.values().begin(), p.tensor.values().end());
  std::vector<std::span<const double>> none(m.parameters().size());
  SgdState state;
  sgd_step(m, none, 0.1, 0.0, 0.01, state);
  for (std::size_t i = 0; i < before.size(); ++i)
    for (std::size_t k = 0; k < before[i].size(); ++k)
      EXPECT_EQ(m.parameters()[i].tensor.values()[k], before[i][k] - 0.1 * (0.01 * before[i][k]));
}

TEST(Sgd, MomentumTwoStepDisplacement) {
  Model m = build_model(ModelConfig{1, 1, 0, 2}, 4);
  const double w0 = m.parameters()[0].tensor.values()[0];
  std::vector<std::vector<double>> g;
  for (const auto& p : m.parameters()) g.emplace_back(p.tensor.numel(), 2.0);
  std::vector<std::span<const double>> spans(g.begin(), g.end());
  SgdState state;
  sgd_step(m, spans, 0.01, 0.9, 0.0, state);
  sgd_step(m, spans, 0.01, 0.9, 0.0, state);
  EXPECT_NEAR(m.parameters()[0].tensor.values()[0] - w0, -0.01 * 2.0 * (1.0 + 1.9), 1e-15);
}

TEST(Sgd, MisalignedGradientsRejected) {
  Model m = build_model(ModelConfig{1, 1, 0, 2}, 4);
  std::vector<std::span<const double>> too_few(1);
  SgdState state;
  EXPECT_THROW(sgd_step(m, too_few, 0.1, 0.0, 0.0, state), ShapeError);
  std::vector<double> wrong(5, 0.0);
  std::vector<std::span<const double>> bad(m.parameters().size());
  bad[0] = wrong;
  EXPECT_THROW(sgd_step(m, bad, 0.1, 0.0, 0.0, state), ShapeError);
}

TEST(TrainConfig, ValidationListsField) {
  TrainConfig c = small_config(3);
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), ValidationError);
  c = small_config(3);
  c.momentum = 1.0;
  EXPECT_THROW(c.validate(), ValidationError);
  c = small_config(3);
  c.initial_lr = 0.0;
  EXPECT_THROW(c.validate(), ValidationError);
  c = small_config(3);
  c.weight_decay = -1.0;
  EXPECT_THROW(c.validate(), ValidationError);
}

TEST(TrainStandard, ZeroEpochsLeavesModelUnchanged) {
  const Dataset data = separable(1);
  const Model init = build_model(ModelConfig{2, 8, 1, 2}, 1);
  TrainConfig c = small_config(0);
  c.record_aign = true;
  const auto result = train_standard(init.clone(), data, c);
  expect_same_parameters(result.model, init);
  ASSERT_TRUE(result.ledger.has_value());
  for (std::size_t cnt : result.ledger->count()) EXPECT_EQ(cnt, 0u);
  EXPECT_TRUE(result.log.empty());
}

TEST(TrainStandard, SeparableClustersReachFullAccuracy) {
  const Dataset data = separable(2);
  TrainConfig c = small_config(50);
  const auto result = train_standard(build_model(ModelConfig{2, 16, 2, 2}, 2), data, c);
  EXPECT_EQ(accuracy(result.model, data), 1.0);
  for (const auto& e : result.log) EXPECT_TRUE(std::isfinite(e.mean_loss));
  EXPECT_EQ(result.log.size(), 50u);
}

TEST(TrainStandard, LedgerCountsEqualEpochs) {
  const Dataset data = separable(3, 13);  // 26 samples, partial final batch
  TrainConfig c = small_config(7);
  c.record_aign = true;
  c.keep_aign_trajectory = true;
  const auto result = train_standard(build_model(ModelConfig{2, 8, 1, 2}, 3), data, c);
  ASSERT_TRUE(result.ledger.has_value());
  for (std::size_t cnt : result.ledger->count()) EXPECT_EQ(cnt, 7u);
  EXPECT_EQ(result.ledger->per_epoch().size(), 7u);
  for (double s : aign_scores(*result.ledger)) EXPECT_GE(s, 0.0);
}

TEST(TrainStandard, BitwiseDeterministic) {
  const Dataset data = separable(4);
  TrainConfig c = small_config(5);
  const Model init = build_model(ModelConfig{2, 8, 2, 2}, 4);
  const auto a = train_standard(init.clone(), data, c);
  const auto b = train_standard(init.clone(), data, c);
  expect_same_parameters(a.model, b.model);
  c.seed = 6;
  const auto other = train_standard(init.clone(), data, c);
  EXPECT_NE(other.model.parameters()[0].tensor.values()[0], a.model.parameters()[0].tensor.values()[0]);
}

TEST(TrainStandard, NonFiniteLossReportsEpochAndBatch) {
  const Dataset data = separable(5);
  TrainConfig c = small_config(3);
  c.initial_lr = 1e200;
  try {
    train_standard(build_model(ModelConfig{2, 8, 1, 2}, 5), data, c);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("epoch"), std::string::npos);
    EXPECT_NE(msg.find("batch"), std::string::npos);
  }
}

TEST(TrainStandard, EmptyOrMismatchedDataRejected) {
  const Dataset data = separable(6);
  const Dataset empty = subset(data, std::vector<std::size_t>{});
  EXPECT_THROW(train_standard(build_model(ModelConfig{2, 4, 0, 2}, 0), empty, small_config(1)), ValidationError);
  EXPECT_THROW(train_standard(build_model(ModelConfig{3, 4, 0, 2}, 0), data, small_config(1)), ShapeError);
}

TEST(TrainStandard, ProbeLedgersTrackHeldOutData) {
  const Dataset data = separable(7);
  const Dataset probe = separable(8, 5);
  TrainConfig c = small_config(4);
  c.record_aign = true;
  TrainHooks hooks;
  hooks.probes = {&probe};
  std::size_t calls = 0;
  hooks.on_epoch_end = [&](std::size_t, const Model&) { ++calls; };
  const auto result = train_standard(build_model(ModelConfig{2, 8, 1, 2}, 7), data, c, hooks);
  ASSERT_EQ(result.probe_ledgers.size(), 1u);
  for (std::size_t cnt : result.probe_ledgers[0].count()) EXPECT_EQ(cnt, 4u);
  EXPECT_EQ(calls, 4u);
}

TEST(InputGradientNorms, MatchesSingleSampleBackward) {
  const Dataset data = separable(9, 20);
  const Model m = build_model(ModelConfig{2, 8, 2, 2}, 9);
  const auto norms = input_gradient_norms(m, data, 7);
  for (std::size_t i = 0; i < data.size(); ++i) {
    Tape tape;
    const std::vector<std::size_t> row{i};
    Tensor x = Tensor::from({1, 2}, {data.features.at(i, 0), data.features.at(i, 1)}, true);
    const auto y = data.gather_labels(row);
    tape.backward(tape.softmax_cross_entropy(m.forward(tape, x, ParamMode::frozen), y));
    const double expected = std::hypot(x.grad()[0], x.grad()[1]);
    EXPECT_NEAR(norms[i], expected, 1e-12 * std::max(1.0, expected));
  }
}

TEST(InputGradientNorms, BitwiseIndependentOfThreadCount) {
  const Dataset data = separable(10, 50);
  const Model m = build_model(ModelConfig{2, 8, 2, 2}, 10);
  setenv("EASYCORE_THREADS", "1", 1);
  const auto a = input_gradient_norms(m, data, 7);
  setenv("EASYCORE_THREADS", "4", 1);
  const auto b = input_gradient_norms(m, data, 7);
  unsetenv("EASYCORE_THREADS");
  EXPECT_EQ(a, b);
}

TEST(InputGradientNorms, ShardSizeOnlyPerturbsRounding) {
  const Dataset data = separable(10, 50);
  const Model m = build_model(ModelConfig{2, 8, 2, 2}, 10);
  const auto a = input_gradient_norms(m, data, 1);
  for (std::size_t shard : {33u, 1000u}) {
    const auto b = input_gradient_norms(m, data, shard);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-13 * std::max(1.0, a[i]));
  }
}

TEST(Trades, ZeroEpsilonLossIsCrossEntropy) {
  const Dataset data = separable(11, 8);
  const Model m = build_model(ModelConfig{2, 8, 1, 2}, 11);
  const TradesConfig cfg = TradesConfig::with_epsilon(0.0);
  Tape t1, t2;
  const double trades = trades_loss(t1, m, data.features, data.labels, cfg).item();
  const double ce = t2.softmax_cross_entropy(forward_logits(m, data.features), data.labels).item();
  EXPECT_EQ(trades, ce);
}

TEST(Trades, ZeroBetaIsCrossEntropyAndLossBoundsCe) {
  const Dataset data = separable(12, 8);
  const Model m = build_model(ModelConfig{2, 8, 1, 2}, 12);
  TradesConfig cfg = TradesConfig::with_epsilon(0.5);
  Tape t0;
  const double ce = t0.softmax_cross_entropy(forward_logits(m, data.features), data.labels).item();
  Tape t1;
  const double with_beta = trades_loss(t1, m, data.features, data.labels, cfg).item();
  EXPECT_GE(with_beta, ce);
  cfg.beta = 0.0;
  Tape t2;
  EXPECT_NEAR(trades_loss(t2, m, data.features, data.labels, cfg).item(), ce, 1e-15);
}

TEST(Trades, InnerAttackMustTargetKl) {
  TradesConfig cfg = TradesConfig::with_epsilon(0.1);
  EXPECT_EQ(cfg.inner_attack.steps, 10u);
  EXPECT_DOUBLE_EQ(cfg.inner_attack.effective_step_size(), 0.025);
  EXPECT_TRUE(cfg.inner_attack.random_start);
  EXPECT_DOUBLE_EQ(cfg.beta, 6.0);
  cfg.inner_attack.objective = AttackObjective::cross_entropy;
  EXPECT_THROW(cfg.validate(), ValidationError);
  cfg = TradesConfig::with_epsilon(0.1);
  cfg.beta = -1.0;
  EXPECT_THROW(cfg.validate(), ValidationError);
}

TEST(Trades, ZeroEpsilonMatchesStandardBitwise) {
  const Dataset data = separable(13, 30);
  TrainConfig c = small_config(4);
  const Model init = build_model(ModelConfig{2, 8, 2, 2}, 13);
  TradesConfig t = TradesConfig::with_epsilon(0.0);
  t.beta = 3.7;
  const auto standard = train_standard(init.clone(), data, c);
  const auto trades = train_trades(init.clone(), data, c, t);
  expect_same_parameters(standard.model, trades.model);
}

TEST(Trades, RobustTrainingStaysAccurateOnSeparableData) {
  const Dataset data = separable(14);
  TrainConfig c = small_config(20);
  const auto result = train_trades(build_model(ModelConfig{2, 16, 2, 2}, 14), data, c, TradesConfig::with_epsilon(0.5));
  EXPECT_GE(accuracy(result.model, data), 0.95);
}

class CheckpointTrainTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = std::filesystem::temp_directory_path() /
           (std::string("easycore_train_") + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    std::filesystem::remove_all(dir_);
  }
  void TearDown() override { std::filesystem::remove_all(dir_); }
  std::filesystem::path dir_;
};

TEST_F(CheckpointTrainTest, OneCheckpointPerEpochAndReplayMatchesOnline) {
  const Dataset data = separable(15, 12);
  TrainConfig c = small_config(5);
  c.checkpoint_every = 1;
  c.checkpoint_dir = dir_;
  c.record_aign = true;
  const auto result = train_standard(build_model(ModelConfig{2, 8, 1, 2}, 15), data, c);
  ASSERT_EQ(result.checkpoints.size(), 5u);
  for (const auto& p : result.checkpoints) EXPECT_TRUE(std::filesystem::exists(p));
  EXPECT_EQ(result.checkpoints.front().filename(), "epoch_0000.ezc");

  const AignLedger replay = aign_from_checkpoints(result.checkpoints, data);
  EXPECT_EQ(aign_scores(replay), aign_scores(*result.ledger));
  expect_same_parameters(load_checkpoint(result.checkpoints.back()), result.model);
}

TEST_F(CheckpointTrainTest, TrainLogCsv) {
  std::filesystem::create_directories(dir_);
  const std::vector<EpochLog> log = {{0, 0.1, 0.5, 0.75}, {1, 0.05, 0.25, 1.0}};
  write_train_log_csv(log, dir_ / "log.csv");
  std::ifstream in(dir_ / "log.csv");
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  EXPECT_EQ(header, "epoch,lr,mean_loss,train_accuracy");
  EXPECT_EQ(row, "0,0.1,0.5,0.75");
}
