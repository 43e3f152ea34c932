#include "tdml/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <random>
#include <stdexcept>
#include <string>

#include "tdml/errors.hpp"
#include "tdml/sampler.hpp"

namespace tdml {

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               const AdamConfig& config) {
  if (grads.size() != params.size() || state.first_moment.size() != params.size() ||
      state.second_moment.size() != params.size()) {
    throw std::invalid_argument("adam_step: parameter, gradient and state sizes differ");
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!std::isfinite(grads[i]))
      throw NonFiniteError("adam_step: non-finite gradient at index " + std::to_string(i));
  }
  const std::uint64_t t = ++state.step;
  const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    double& m = state.first_moment[i];
    double& v = state.second_moment[i];
    m = config.beta1 * m + (1.0 - config.beta1) * g;
    v = config.beta2 * v + (1.0 - config.beta2) * g * g;
    const double m_hat = m / bc1;
    const double v_hat = v / bc2;
    params[i] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon);
  }
}

void adam_step(ParamSet& params, const ParamSet& grads, AdamState& state,
               const AdamConfig& config) {
  if (params.shapes() != grads.shapes())
    throw std::invalid_argument("adam_step: gradient shapes do not match parameters");
  adam_step(params.flat(), grads.flat(), state, config);
}

void TrainConfig::validate() const {
  if (!(margin >= 0.0)) throw std::invalid_argument("train: margin must be >= 0");
  if (!(adam.learning_rate > 0.0)) throw std::invalid_argument("train: learning rate must be > 0");
  if (epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
}

std::vector<int> encode_labels(std::span<const Record> records) {
  std::map<std::string, int> ids;
  for (const auto& r : records) ids.emplace(r.label, 0);
  int next = 0;
  for (auto& [label, id] : ids) id = next++;
  std::vector<int> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(ids.at(r.label));
  return out;
}

ParamSet warm_start(const ParamSet& fresh, const ParamSet& trained) {
  ParamSet out = fresh;
  const std::size_t layers = std::min(fresh.layer_count(), trained.layer_count());
  for (std::size_t l = 0; l < layers; ++l) {
    if (fresh.shape(l) != trained.shape(l)) break;
    std::copy(trained.weights(l).begin(), trained.weights(l).end(), out.weights(l).begin());
    std::copy(trained.bias(l).begin(), trained.bias(l).end(), out.bias(l).begin());
  }
  return out;
}

std::string format_progress(const EpochStats& stats) {
  char buf[128];
  std::snprintf(buf, sizeof(buf), "epoch=%zu loss=%.6f active=%.4f", stats.epoch, stats.mean_loss,
                stats.active_fraction);
  return buf;
}

TrainResult train(std::span<const Record> dataset, const ModelConfig& model_config,
                  const TrainConfig& config, std::optional<ParamSet> initial,
                  const TrainHooks& hooks) {
  config.validate();
  const Model model(model_config);
  const std::vector<int> labels = encode_labels(dataset);
  if (std::adjacent_find(labels.begin(), labels.end(), std::not_equal_to<>()) == labels.end())
    throw NoValidTripletError("train: dataset has a single class, no valid triplet exists");

  TrainResult result;
  result.params = initial ? std::move(*initial) : init_params(model_config, config.seed);
  if (result.params.shapes() != layer_shapes(model_config))
    throw std::invalid_argument("train: initial parameters do not match the model config");
  AdamState adam(result.params.size());

  const bool map_inputs = model_config.input_kind == InputKind::kMap;
  if (config.flip_augment && !map_inputs && hooks.progress) {
    *hooks.progress << "warning: flip augmentation skipped for vector inputs\n";
  }

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    const BatchPlan plan = make_pk_batches(labels, config.classes_per_batch,
                                           config.samples_per_class, config.seed, epoch);
    if (epoch == 1 && !plan.small_classes.empty() && hooks.progress) {
      *hooks.progress << "warning: " << plan.small_classes.size()
                      << " classes have fewer than K records and are sampled with replacement\n";
    }
    std::mt19937_64 flip_rng(config.seed ^ (0x9e3779b97f4a7c15ULL * epoch));

    double loss_sum = 0.0;
    std::size_t active = 0;
    std::size_t valid = 0;
    for (std::size_t b = 0; b < plan.batches.size(); ++b) {
      const auto& indices = plan.batches[b];
      std::vector<Record> batch;
      std::vector<int> batch_labels;
      batch.reserve(indices.size());
      for (std::size_t idx : indices) {
        Record r = dataset[idx];
        if (config.flip_augment && map_inputs) r.payload = augment_flip(r.payload, flip_rng);
        batch.push_back(std::move(r));
        batch_labels.push_back(labels[idx]);
      }

      ForwardResult fwd = model.forward(result.params, batch);
      const LossResult loss = batch_all_loss(TripletBatchView{fwd.embeddings, batch_labels},
                                             config.margin, config.normalization);
      if (!std::isfinite(loss.total_loss)) {
        throw NonFiniteError("train: non-finite loss at epoch " + std::to_string(epoch) +
                             ", batch " + std::to_string(b));
      }
      const Model::Gradients grads = model.backward(result.params, fwd.trace, loss.grad);
      try {
        adam_step(result.params, grads.params, adam, config.adam);
      } catch (const NonFiniteError& e) {
        throw NonFiniteError(std::string(e.what()) + " (epoch " + std::to_string(epoch) +
                             ", batch " + std::to_string(b) + ")");
      }
      loss_sum += loss.total_loss;
      active += loss.active_triplets;
      valid += loss.valid_triplets;
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.mean_loss = loss_sum / static_cast<double>(plan.batches.size());
    stats.active_fraction = valid ? static_cast<double>(active) / static_cast<double>(valid) : 0.0;
    stats.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.history.push_back(stats);
    if (hooks.progress) *hooks.progress << format_progress(stats) << '\n';
    if (hooks.on_epoch_end) hooks.on_epoch_end(epoch, result.params);
  }
  return result;
}

}  // namespace tdml
