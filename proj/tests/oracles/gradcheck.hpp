#pragma once

#include <random>
#include <string>
#include <vector>

#include "oracles/oracles.hpp"
#include "tdml/loss.hpp"
#include "tdml/model.hpp"

namespace tdml::oracle {

struct GradCheckCase {
  std::string name;
  ModelConfig config;
  std::vector<Record> batch;
  std::vector<int> labels;
};

inline std::vector<double> random_vector(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = g(rng);
  return v;
}

// Three classes x two samples in each of the three architectures.
inline std::vector<GradCheckCase> gradcheck_cases(std::uint64_t seed) {
  std::mt19937_64 rng(seed * 7919 + 1);
  const std::vector<int> labels{0, 0, 1, 1, 2, 2};
  std::vector<GradCheckCase> cases;

  GradCheckCase dense{"dense", {}, {}, labels};
  dense.config.input_dim = 6;
  dense.config.dense_dims = {8, 4};
  for (std::size_t i = 0; i < labels.size(); ++i)
    dense.batch.push_back({"v" + std::to_string(i), std::to_string(labels[i]), random_vector(6, rng)});
  cases.push_back(dense);

  GradCheckCase conv{"conv_gap_dense", {}, {}, labels};
  conv.config.input_kind = InputKind::kMap;
  conv.config.input_dim = 2;
  conv.config.conv_channels = 4;
  conv.config.dense_dims = {8, 3};
  const std::size_t sizes[][2] = {{3, 4}, {4, 4}, {2, 5}, {5, 3}, {3, 3}, {4, 2}};
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto [h, w] = sizes[i];
    conv.batch.push_back({"m" + std::to_string(i), std::to_string(labels[i]),
                          FeatureMap(h, w, 2, random_vector(h * w * 2, rng))});
  }
  cases.push_back(conv);

  GradCheckCase fc{"dense_fc_reduction", {}, {}, labels};
  fc.config.input_dim = 6;
  fc.config.dense_dims = {16, 6};
  fc.config.fc_reduction = 3;
  for (std::size_t i = 0; i < labels.size(); ++i)
    fc.batch.push_back({"r" + std::to_string(i), std::to_string(labels[i]), random_vector(6, rng)});
  cases.push_back(fc);
  return cases;
}

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t parameters = 0;
};

// Analytic gradient of model -> L2 norm -> batch-all loss against central
// differences over every parameter.
inline GradCheckResult check_pipeline_gradients(const GradCheckCase& c, std::uint64_t seed,
                                                double margin = 0.2, double h = 1e-5,
                                                LossNormalization mode = LossNormalization::kSum) {
  const Model model(c.config);
  const ParamSet params = init_params(c.config, seed);
  const auto fwd = model.forward(params, c.batch);
  const auto loss = batch_all_loss(TripletBatchView{fwd.embeddings, c.labels}, margin, mode);
  const auto grads = model.backward(params, fwd.trace, loss.grad);

  auto objective = [&](const std::vector<double>& flat) {
    const ParamSet p(params.shapes(), flat);
    const Matrix e = model.embed(p, c.batch);
    return batch_all_loss(TripletBatchView{e, c.labels}, margin, mode).total_loss;
  };
  const std::vector<double> flat(params.flat().begin(), params.flat().end());
  const auto numeric = finite_difference(objective, flat, h);
  const std::vector<double> analytic(grads.params.flat().begin(), grads.params.flat().end());
  return {max_relative_error(analytic, numeric), flat.size()};
}

}  // namespace tdml::oracle
