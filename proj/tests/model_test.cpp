#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles/gradcheck.hpp"
#include "oracles/oracles.hpp"
#include "tdml/model.hpp"

namespace tdml {
namespace {

ModelConfig dense_config(std::size_t in, std::vector<std::size_t> dims) {
  ModelConfig c;
  c.input_dim = in;
  c.dense_dims = std::move(dims);
  return c;
}

TEST(ModelConfig, Validation) {
  EXPECT_THROW(dense_config(4, {}).validate(), std::invalid_argument);
  EXPECT_THROW(dense_config(0, {3}).validate(), std::invalid_argument);
  ModelConfig c = dense_config(4, {3});
  c.fc_reduction = 3;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c.fc_reduction = 2;
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.output_dim(), 2u);
  c.conv_channels = 4;  // conv needs map input
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(ParamSet, FlattenRoundTrip) {
  ModelConfig c = dense_config(5, {4, 3});
  c.fc_reduction = 2;
  const ParamSet p = init_params(c, 3);
  const std::vector<double> flat(p.flat().begin(), p.flat().end());
  EXPECT_EQ(ParamSet(p.shapes(), flat), p);
  EXPECT_EQ(p.size(), 5u * 4 + 4 + 4 * 3 + 3 + 3 * 2 + 2);
  EXPECT_THROW(ParamSet(p.shapes(), std::vector<double>(3)), std::invalid_argument);
}

TEST(InitParams, DeterministicPerSeed) {
  const ModelConfig c = dense_config(8, {6, 4});
  EXPECT_EQ(init_params(c, 42), init_params(c, 42));
  EXPECT_NE(init_params(c, 42), init_params(c, 43));
}

TEST(InitParams, ZeroBiasesAndHeBounds) {
  ModelConfig c;
  c.input_kind = InputKind::kMap;
  c.input_dim = 3;
  c.conv_channels = 5;
  c.dense_dims = {6, 4};
  const ParamSet p = init_params(c, 1);
  for (std::size_t l = 0; l < p.layer_count(); ++l) {
    for (double b : p.bias(l)) EXPECT_EQ(b, 0.0);
    const double limit = std::sqrt(6.0 / static_cast<double>(p.shape(l).in));
    double mean = 0.0;
    for (double w : p.weights(l)) {
      EXPECT_LE(std::abs(w), limit);
      mean += w;
    }
    mean /= static_cast<double>(p.weights(l).size());
    EXPECT_LT(std::abs(mean), limit / 2);
  }
  EXPECT_EQ(p.shape(0).in, 27u);
}

TEST(Gap, ConstantMap) {
  FeatureMap m(3, 5, 2, 1.75);
  const auto v = gap(m);
  ASSERT_EQ(v.size(), 2u);
  EXPECT_DOUBLE_EQ(v[0], 1.75);
  EXPECT_DOUBLE_EQ(v[1], 1.75);
}

TEST(Gap, ArithmeticMean) {
  const FeatureMap m(2, 2, 1, {1, 2, 3, 4});
  EXPECT_DOUBLE_EQ(gap(m)[0], 2.5);
}

TEST(Gap, EmptyMapRejected) {
  EXPECT_THROW(gap(FeatureMap(0, 3, 2)), std::invalid_argument);
  EXPECT_THROW(gap(FeatureMap(2, 3, 0)), std::invalid_argument);
}

ModelConfig conv_config() {
  ModelConfig c;
  c.input_kind = InputKind::kMap;
  c.input_dim = 3;
  c.conv_channels = 4;
  c.dense_dims = {5, 6};
  return c;
}

TEST(Forward, SizeAgnosticEmbeddingLength) {
  const ModelConfig c = conv_config();
  const Model model(c);
  const ParamSet p = init_params(c, 5);
  std::mt19937_64 rng(2);
  const std::vector<Record> batch{
      {"a", "x", FeatureMap(4, 4, 3, oracle::random_vector(48, rng))},
      {"b", "x", FeatureMap(7, 5, 3, oracle::random_vector(105, rng))}};
  const Matrix e = model.embed(p, batch);
  EXPECT_EQ(e.rows(), 2u);
  EXPECT_EQ(e.cols(), 6u);
  // parameter count does not depend on H, W
  EXPECT_EQ(p.size(), layer_shapes(c) == p.shapes() ? p.size() : 0u);
  EXPECT_EQ(p.size(), 4u * 27 + 4 + 5 * 4 + 5 + 6 * 5 + 6);
}

TEST(Forward, IdentityDenseReducesToNormalize) {
  const ModelConfig c = dense_config(2, {2});
  ParamSet p(layer_shapes(c));
  p.weights(0)[0] = 1.0;
  p.weights(0)[3] = 1.0;
  const Model model(c);
  const std::vector<Record> batch{{"r", "l", std::vector<double>{3, 4}}};
  const Matrix e = model.embed(p, batch);
  EXPECT_NEAR(e(0, 0), 0.6, 1e-15);
  EXPECT_NEAR(e(0, 1), 0.8, 1e-15);
}

TEST(Forward, UnitNormsDuplicatesAndDeterminism) {
  ModelConfig c = dense_config(6, {8, 5});
  c.fc_reduction = 3;
  const Model model(c);
  const ParamSet p = init_params(c, 8);
  std::mt19937_64 rng(1);
  std::vector<Record> batch;
  for (int i = 0; i < 10; ++i) batch.push_back({std::to_string(i), "l", oracle::random_vector(6, rng)});
  batch.push_back({"dup", "l", std::get<std::vector<double>>(batch[3].payload)});
  const Matrix e = model.embed(p, batch);
  ASSERT_EQ(e.cols(), 3u);
  for (std::size_t i = 0; i < e.rows(); ++i) EXPECT_NEAR(norm(e.row(i)), 1.0, 1e-12);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(e(3, k), e(10, k));
  EXPECT_EQ(model.embed(p, batch), e);
}

TEST(Forward, ShapeMismatchNamesRecord) {
  const ModelConfig c = dense_config(3, {2});
  const Model model(c);
  const std::vector<Record> batch{{"ok", "l", std::vector<double>{1, 2, 3}},
                                  {"bad-one", "l", std::vector<double>{1, 2}}};
  try {
    model.embed(init_params(c, 0), batch);
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("bad-one"), std::string::npos);
  }
  const std::vector<Record> maps{{"map", "l", FeatureMap(2, 2, 3)}};
  EXPECT_THROW(model.embed(init_params(c, 0), maps), std::invalid_argument);
}

TEST(Backward, NormalizationGradientOrthogonalToInput) {
  std::mt19937_64 rng(6);
  const Matrix x = oracle::random_matrix(8, 5, rng, -2, 2);
  std::vector<double> norms(8);
  for (std::size_t i = 0; i < 8; ++i) norms[i] = norm(x.row(i));
  const Matrix xhat = l2_normalize_rows(x);
  const Matrix g = oracle::random_matrix(8, 5, rng, -3, 3);
  const Matrix gin = l2_normalize_backward(xhat, norms, g);
  for (std::size_t i = 0; i < 8; ++i) EXPECT_NEAR(dot(gin.row(i), x.row(i)), 0.0, 1e-10);
}

TEST(Backward, ZeroUpstreamGivesZeroGradients) {
  const ModelConfig c = conv_config();
  const Model model(c);
  const ParamSet p = init_params(c, 2);
  std::mt19937_64 rng(3);
  const std::vector<Record> batch{{"a", "x", FeatureMap(3, 3, 3, oracle::random_vector(27, rng))}};
  const auto fwd = model.forward(p, batch);
  const auto grads = model.backward(p, fwd.trace, Matrix(1, 6));
  for (double g : grads.params.flat()) EXPECT_EQ(g, 0.0);
}

TEST(Backward, RejectsMismatchedGradient) {
  const ModelConfig c = dense_config(3, {2});
  const Model model(c);
  const ParamSet p = init_params(c, 0);
  const std::vector<Record> batch{{"a", "l", std::vector<double>{1, 2, 3}}};
  const auto fwd = model.forward(p, batch);
  EXPECT_THROW(model.backward(p, fwd.trace, Matrix(1, 3)), std::invalid_argument);
  EXPECT_THROW(model.backward(p, fwd.trace, Matrix(2, 2)), std::invalid_argument);
}

// Gradient of a fixed linear functional of the embeddings, checked against
// central differences on the parameters and the inputs.
TEST(Backward, MatchesFiniteDifferencesSmallDense) {
  const ModelConfig c = dense_config(6, {5, 4});
  const Model model(c);
  const ParamSet p = init_params(c, 17);
  std::mt19937_64 rng(17);
  std::vector<Record> batch;
  for (int i = 0; i < 4; ++i) batch.push_back({std::to_string(i), "l", oracle::random_vector(6, rng)});
  const Matrix weights = oracle::random_matrix(4, 4, rng);
  auto objective_of = [&](const Matrix& e) {
    double s = 0.0;
    for (std::size_t i = 0; i < e.data().size(); ++i) s += e.data()[i] * weights.data()[i];
    return s;
  };

  const auto fwd = model.forward(p, batch);
  const auto grads = model.backward(p, fwd.trace, weights);
  const std::vector<double> flat(p.flat().begin(), p.flat().end());
  const auto numeric = oracle::finite_difference(
      [&](const std::vector<double>& v) { return objective_of(model.embed(ParamSet(p.shapes(), v), batch)); },
      flat, 1e-5);
  EXPECT_LT(oracle::max_relative_error({grads.params.flat().begin(), grads.params.flat().end()}, numeric), 1e-4);

  for (std::size_t r = 0; r < batch.size(); ++r) {
    const auto x0 = std::get<std::vector<double>>(batch[r].payload);
    const auto num_in = oracle::finite_difference(
        [&](const std::vector<double>& v) {
          auto b = batch;
          b[r].payload = v;
          return objective_of(model.embed(p, b));
        },
        x0, 1e-5);
    EXPECT_LT(oracle::max_relative_error(std::get<std::vector<double>>(grads.inputs[r]), num_in), 1e-4);
  }
}

TEST(Backward, ConvInputGradientMatchesFiniteDifferences) {
  ModelConfig c = conv_config();
  c.dense_dims = {16, 6};
  const Model model(c);
  const ParamSet p = init_params(c, 4);
  std::mt19937_64 rng(4);
  const std::vector<Record> batch{{"a", "x", FeatureMap(3, 4, 3, oracle::random_vector(36, rng))}};
  const Matrix upstream = oracle::random_matrix(1, 6, rng);
  const auto fwd = model.forward(p, batch);
  const auto grads = model.backward(p, fwd.trace, upstream);
  const auto& map = std::get<FeatureMap>(batch[0].payload);
  const auto numeric = oracle::finite_difference(
      [&](const std::vector<double>& v) {
        const std::vector<Record> b{{"a", "x", FeatureMap(3, 4, 3, v)}};
        return dot(model.embed(p, b).row(0), upstream.row(0));
      },
      map.data, 1e-5);
  EXPECT_LT(oracle::max_relative_error(std::get<FeatureMap>(grads.inputs[0]).data, numeric), 1e-4);
}

class PipelineGradient : public ::testing::TestWithParam<std::uint64_t> {};

TEST_P(PipelineGradient, AllConfigsMatchFiniteDifferences) {
  for (const auto& c : oracle::gradcheck_cases(GetParam())) {
    const auto r = oracle::check_pipeline_gradients(c, GetParam());
    EXPECT_LT(r.max_rel_error, 1e-4) << c.name << " seed " << GetParam();
  }
}

INSTANTIATE_TEST_SUITE_P(Seeds, PipelineGradient, ::testing::Values(1, 2, 3, 4, 5));

}  // namespace
}  // namespace tdml
