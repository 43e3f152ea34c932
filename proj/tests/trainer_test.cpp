#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

#include "tdml/dataio.hpp"
#include "tdml/errors.hpp"
#include "tdml/trainer.hpp"

namespace tdml {
namespace {

TEST(Adam, ZeroGradientLeavesParams) {
  std::vector<double> theta{0.5, -1.0, 2.0};
  const std::vector<double> g(3, 0.0);
  AdamState state(3);
  adam_step(theta, g, state, {});
  EXPECT_EQ(theta, (std::vector<double>{0.5, -1.0, 2.0}));
  EXPECT_EQ(state.step, 1u);
}

TEST(Adam, FirstStepClosedForm) {
  std::vector<double> theta{1.0};
  const std::vector<double> g{0.5};
  AdamState state(1);
  adam_step(theta, g, state, {});
  // m_hat = g, v_hat = g^2 after bias correction.
  EXPECT_NEAR(1.0 - theta[0], 1e-3 * 0.5 / (0.5 + 1e-8), 1e-15);
  EXPECT_NEAR(state.first_moment[0], 0.05, 1e-15);
  EXPECT_NEAR(state.second_moment[0], 0.001 * 0.25, 1e-15);
}

TEST(Adam, MinimizesQuadratic) {
  std::vector<double> theta{1.0};
  AdamState state(1);
  AdamConfig cfg;
  cfg.learning_rate = 0.01;
  for (int i = 0; i < 1000; ++i) {
    const std::vector<double> g{2.0 * theta[0]};
    adam_step(theta, g, state, cfg);
  }
  EXPECT_LT(std::abs(theta[0]), 0.01);
}

TEST(Adam, ZeroLearningRateIsIdentity) {
  std::vector<double> theta{0.3, 0.7};
  const std::vector<double> g{1.0, -2.0};
  AdamState state(2);
  AdamConfig cfg;
  cfg.learning_rate = 0.0;
  adam_step(theta, g, state, cfg);
  adam_step(theta, g, state, cfg);
  EXPECT_EQ(theta, (std::vector<double>{0.3, 0.7}));
  EXPECT_EQ(state.step, 2u);
  EXPECT_NE(state.first_moment[0], 0.0);
}

TEST(Adam, Errors) {
  std::vector<double> theta{1.0, 2.0};
  AdamState state(2);
  const std::vector<double> bad{0.1, std::numeric_limits<double>::quiet_NaN()};
  EXPECT_THROW(adam_step(theta, bad, state, {}), NonFiniteError);
  EXPECT_EQ(theta, (std::vector<double>{1.0, 2.0}));
  EXPECT_EQ(state.step, 0u);
  const std::vector<double> shorter{0.1};
  EXPECT_THROW(adam_step(theta, shorter, state, {}), std::invalid_argument);
}

TEST(TrainConfig, Validation) {
  TrainConfig c;
  EXPECT_EQ(c.margin, 0.2);
  EXPECT_NO_THROW(c.validate());
  c.margin = -0.1;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.adam.learning_rate = 0.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.epochs = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

struct Fixture {
  Dataset train;
  ModelConfig model;
  TrainConfig config;
};

Fixture small_fixture(std::size_t epochs) {
  ClusterOptions opt;
  opt.num_classes = 8;
  opt.per_class = 100;
  opt.seed = 3;
  Fixture f;
  f.train = generate_clusters(opt).first;
  f.model.input_dim = opt.dim;
  f.model.dense_dims = {32, 16};
  f.config.epochs = epochs;
  f.config.classes_per_batch = 4;
  f.config.samples_per_class = 3;
  f.config.seed = 5;
  return f;
}

TEST(Train, Deterministic) {
  const Fixture f = small_fixture(3);
  const TrainResult a = train(f.train.records, f.model, f.config);
  const TrainResult b = train(f.train.records, f.model, f.config);
  EXPECT_EQ(a.params, b.params);
  ASSERT_EQ(a.history.size(), b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    EXPECT_EQ(a.history[i].mean_loss, b.history[i].mean_loss);
    EXPECT_EQ(a.history[i].active_fraction, b.history[i].active_fraction);
  }
}

TEST(Train, LossDecreasesAndHistoryIsFinite) {
  const Fixture f = small_fixture(10);
  std::ostringstream progress;
  TrainHooks hooks;
  hooks.progress = &progress;
  std::size_t callbacks = 0;
  hooks.on_epoch_end = [&](std::size_t, const ParamSet&) { ++callbacks; };
  const TrainResult r = train(f.train.records, f.model, f.config, std::nullopt, hooks);
  ASSERT_EQ(r.history.size(), 10u);
  EXPECT_EQ(callbacks, 10u);
  for (const EpochStats& s : r.history) {
    EXPECT_TRUE(std::isfinite(s.mean_loss));
    EXPECT_GE(s.mean_loss, 0.0);
    EXPECT_GE(s.active_fraction, 0.0);
    EXPECT_LE(s.active_fraction, 1.0);
  }
  EXPECT_LT(r.history.back().mean_loss, r.history.front().mean_loss);
  EXPECT_NE(progress.str().find("epoch=1 loss="), std::string::npos);
  EXPECT_NE(progress.str().find(" active="), std::string::npos);
}

TEST(Train, SingleClassFails) {
  Fixture f = small_fixture(1);
  std::vector<Record> one;
  for (const Record& r : f.train.records)
    if (r.label == f.train.records.front().label) one.push_back(r);
  f.config.classes_per_batch = 2;
  EXPECT_THROW(train(one, f.model, f.config), std::exception);
}

TEST(WeightSharing, BatchOrderDoesNotChangeEmbeddings) {
  const Fixture f = small_fixture(2);
  const TrainResult r = train(f.train.records, f.model, f.config);
  const Model model(f.model);
  std::vector<Record> batch(f.train.records.begin(), f.train.records.begin() + 12);
  const Matrix a = model.embed(r.params, batch);
  std::vector<Record> reversed(batch.rbegin(), batch.rend());
  const Matrix b = model.embed(r.params, reversed);
  for (std::size_t i = 0; i < 12; ++i)
    for (std::size_t k = 0; k < a.cols(); ++k) EXPECT_EQ(a(i, k), b(11 - i, k));
}

TEST(WarmStart, CopiesMatchingLeadingLayers) {
  ModelConfig base;
  base.input_dim = 6;
  base.dense_dims = {5, 4};
  ModelConfig reduced = base;
  reduced.fc_reduction = 2;
  const ParamSet trained = init_params(base, 1);
  const ParamSet fresh = init_params(reduced, 2);
  const ParamSet warm = warm_start(fresh, trained);
  ASSERT_EQ(warm.layer_count(), 3u);
  for (std::size_t l = 0; l < 2; ++l) {
    EXPECT_TRUE(std::equal(warm.weights(l).begin(), warm.weights(l).end(), trained.weights(l).begin()));
  }
  EXPECT_TRUE(std::equal(warm.weights(2).begin(), warm.weights(2).end(), fresh.weights(2).begin()));
}

TEST(Progress, Format) {
  EpochStats s;
  s.epoch = 4;
  s.mean_loss = 0.1234567;
  s.active_fraction = 0.5;
  EXPECT_EQ(format_progress(s), "epoch=4 loss=0.123457 active=0.5000");
}

}  // namespace
}  // namespace tdml
