#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "test_util.hpp"

using namespace trand;

namespace {

// Few identities, one view, small encoder: trains in well under a second.
TrainConfig small_config() {
  TrainConfig c = desk_preset();
  c.encoder.channels = 6;
  c.pretrain_epochs = 6;
  c.batch_persons = 2;
  c.batch_per_person = 2;
  c.epochs_per_round = 2;
  c.adapt_batch = 4;
  c.source_domain = testutil::tiny_domain("src");
  c.target_domain = testutil::tiny_domain("tgt");
  c.target_domain.first_identity = 100;
  c.target_domain.scale = 0.8;
  return c;
}

std::vector<SilhouetteSequence> target_train(const TrainConfig& c) {
  return generate_sequences(c.target_domain, c.seed).split("train").unlabeled().sequences;
}

}  // namespace

TEST(LearningRate, Schedule) {
  TrainConfig c;
  c.learning_rate = 1e-5;
  EXPECT_EQ(lr_at(1, c), 1e-5);
  EXPECT_EQ(lr_at(80, c), 1e-5);
  EXPECT_NEAR(lr_at(81, c), 1e-6, 1e-20);
  EXPECT_NEAR(lr_at(120, c), 1e-6, 1e-20);
  EXPECT_NEAR(lr_at(121, c), 1e-7, 1e-21);
  EXPECT_NEAR(lr_at(161, c), 1e-8, 1e-22);
  double previous = INFINITY;
  for (std::size_t e = 1; e <= 800; ++e) {
    EXPECT_LE(lr_at(e, c), previous);
    previous = lr_at(e, c);
  }
}

TEST(Pretrain, ZeroEpochsReturnsInitialParams) {
  TrainConfig c = small_config();
  c.pretrain_epochs = 0;
  const auto src = generate_sequences(c.source_domain, 1).split("train");
  const auto res = pretrain_source(src.sequences, c);
  EXPECT_EQ(res.params, initial_params(c));
  EXPECT_TRUE(res.log.epochs.empty());
}

TEST(Pretrain, LossDropsOnSeparableSource) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    TrainConfig c = small_config();
    c.seed = seed;
    c.pretrain_epochs = 15;
    const auto src = generate_sequences(c.source_domain, seed).split("train");
    const auto res = pretrain_source(src.sequences, c);
    ASSERT_EQ(res.log.epochs.size(), 15u);
    EXPECT_LT(res.log.epochs.back().loss, res.log.epochs.front().loss) << "seed " << seed;
  }
}

TEST(Pretrain, DeterministicAndLogged) {
  const TrainConfig c = small_config();
  const auto src = generate_sequences(c.source_domain, 1).split("train");
  const auto a = pretrain_source(src.sequences, c);
  const auto b = pretrain_source(src.sequences, c);
  EXPECT_EQ(a.params, b.params);
  ASSERT_EQ(a.log.epochs.size(), b.log.epochs.size());
  const std::size_t batches = (src.sequences.size() + 3) / 4;
  for (std::size_t i = 0; i < a.log.epochs.size(); ++i) {
    EXPECT_EQ(a.log.epochs[i].loss, b.log.epochs[i].loss);
    EXPECT_EQ(a.log.epochs[i].epoch, i + 1);
    EXPECT_EQ(a.log.epochs[i].steps, (i + 1) * batches);
  }
  testutil::TempDir dir;
  write_runlog_csv(dir / "a.csv", a.log);
  write_runlog_csv(dir / "b.csv", b.log);
  EXPECT_EQ(testutil::read_file(dir / "a.csv"), testutil::read_file(dir / "b.csv"));
}

TEST(Pretrain, InfeasibleBatchShape) {
  TrainConfig c = small_config();
  c.batch_persons = 10;
  const auto src = generate_sequences(c.source_domain, 1).split("train");
  EXPECT_THROW(pretrain_source(src.sequences, c), ParameterError);
}

TEST(Adapt, SingleRoundSelectsEverything) {
  TrainConfig c = small_config();
  c.rounds = 1;
  const auto tgt = target_train(c);
  std::size_t selected = 0;
  adapt_target(tgt, initial_params(c), c,
               [&](const CurriculumSchedule& s, const auto&, const auto&) { selected = s.selected.size(); });
  EXPECT_EQ(selected, tgt.size());
}

TEST(Adapt, ZeroLearningRateLeavesParamsAndBank) {
  TrainConfig c = small_config();
  c.learning_rate = 0.0;
  const auto tgt = target_train(c);
  const auto start = initial_params(c);
  const auto built = build_bank(tgt, start, c.momentum);
  int rounds = 0;
  const auto res = adapt_target(tgt, start, c, [&](const auto&, const auto&, const MemoryBank& bank) {
    ++rounds;
    EXPECT_EQ(bank, built);
  });
  EXPECT_EQ(rounds, 4);
  EXPECT_EQ(res.params, start);
}

TEST(Adapt, StepCountAndEpochCounter) {
  TrainConfig c = small_config();
  c.epochs_per_round = 3;
  const auto tgt = target_train(c);
  const auto res = adapt_target(tgt, initial_params(c), c);
  std::size_t expected = 0;
  for (std::size_t r = 1; r <= c.rounds; ++r) {
    expected += c.epochs_per_round * ((selection_count(r, c.rounds, tgt.size()) + c.adapt_batch - 1) / c.adapt_batch);
  }
  EXPECT_EQ(res.log.total_steps(), expected);
  ASSERT_EQ(res.log.epochs.size(), c.rounds * c.epochs_per_round);
  for (std::size_t i = 0; i < res.log.epochs.size(); ++i) {
    EXPECT_EQ(res.log.epochs[i].epoch, i + 1);
    EXPECT_EQ(res.log.epochs[i].round, i / c.epochs_per_round + 1);
    EXPECT_EQ(res.log.epochs[i].learning_rate, lr_at(i + 1, c));
  }
  EXPECT_NE(res.params, initial_params(c));
}

TEST(Adapt, RandomStrategySeedsDiffer) {
  TrainConfig c = small_config();
  c.strategy = Strategy::Random;
  c.epochs_per_round = 0;
  const auto tgt = target_train(c);
  std::vector<std::vector<std::size_t>> picks;
  for (std::uint64_t seed : {1u, 2u}) {
    c.seed = seed;
    adapt_target(tgt, initial_params(c), c, [&](const CurriculumSchedule& s, const auto&, const auto&) {
      if (s.round == 1) picks.push_back(s.selected);
    });
  }
  ASSERT_EQ(picks.size(), 2u);
  EXPECT_EQ(picks[0].size(), picks[1].size());
  EXPECT_NE(picks[0], picks[1]);
}

TEST(Adapt, DeterministicRuns) {
  const TrainConfig c = small_config();
  const auto tgt = target_train(c);
  const auto a = adapt_target(tgt, initial_params(c), c);
  const auto b = adapt_target(tgt, initial_params(c), c);
  EXPECT_EQ(a.params, b.params);
  for (std::size_t i = 0; i < a.log.epochs.size(); ++i) EXPECT_EQ(a.log.epochs[i].loss, b.log.epochs[i].loss);
}

TEST(Adapt, TooFewSamples) {
  TrainConfig c = small_config();
  c.neighbors = 3;
  auto tgt = target_train(c);
  tgt.resize(3);
  EXPECT_THROW(adapt_target(tgt, initial_params(c), c), ParameterError);
}

TEST(Adapt, UnselectedSelfTermsCoverEverySample) {
  TrainConfig c = small_config();
  c.unselected_self_terms = true;
  c.epochs_per_round = 1;
  const auto tgt = target_train(c);
  const auto res = adapt_target(tgt, initial_params(c), c);
  const std::size_t per_epoch = (tgt.size() + c.adapt_batch - 1) / c.adapt_batch;
  EXPECT_EQ(res.log.total_steps(), c.rounds * per_epoch);
}

TEST(Config, PresetsAndRoundTrip) {
  const auto desk = preset("desk");
  EXPECT_EQ(desk.epochs_per_round, 20u);
  EXPECT_EQ(desk.learning_rate, 1e-3);
  EXPECT_EQ(desk.batch_persons, 4u);
  EXPECT_EQ(desk.margin, 0.2);
  EXPECT_EQ(desk.tau, 0.1);
  EXPECT_EQ(desk.neighbors, 1u);
  EXPECT_EQ(desk.rounds, 4u);
  const auto paper = preset("paper");
  EXPECT_EQ(paper.epochs_per_round, 200u);
  EXPECT_EQ(paper.learning_rate, 1e-5);
  EXPECT_EQ(paper.batch_persons * paper.batch_per_person, 128u);
  EXPECT_THROW(preset("huge"), ConfigError);

  for (const auto& c : {desk, paper}) {
    const auto j = config_to_json(c);
    EXPECT_EQ(config_to_json(config_from_json(j)), j);
  }
}

TEST(Config, OverlayAndValidation) {
  auto c = config_from_json(nlohmann::json::parse(R"({"adapt": {"strategy": "low", "neighbors": 2}, "seed": 9})"));
  EXPECT_EQ(c.strategy, Strategy::LowEntropyFirst);
  EXPECT_EQ(c.neighbors, 2u);
  EXPECT_EQ(c.seed, 9u);
  EXPECT_EQ(c.epochs_per_round, 20u);
  c = config_from_json(nlohmann::json::parse(R"({"preset": "paper"})"));
  EXPECT_EQ(c.epochs_per_round, 200u);
  EXPECT_THROW(config_from_json(nlohmann::json::parse(R"({"adapt": {"tua": 1}})")), ConfigError);
  EXPECT_THROW(config_from_json(nlohmann::json::parse(R"({"adapt": {"tau": 0}})")), ConfigError);
  EXPECT_THROW(config_from_json(nlohmann::json::parse(R"({"adapt": {"momentum": 1.0}})")), ConfigError);
  EXPECT_THROW(config_from_json(nlohmann::json::parse(R"({"pretrain": {"margin": -1}})")), ConfigError);
  EXPECT_THROW(config_from_json(nlohmann::json::parse(R"({"adapt": {"rounds": 0}})")), ConfigError);
  EXPECT_THROW(config_from_json(nlohmann::json::parse(R"({"adapt": {"strategy": "mid"}})")), ConfigError);
  EXPECT_THROW(config_from_json(nlohmann::json::parse(R"({"encoder": {"dim": 25}})")), ConfigError);
  EXPECT_THROW(config_from_json(nlohmann::json::parse(R"({"target_domain": {"period": 2}})")), ConfigError);
}
