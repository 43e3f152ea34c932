#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "tdml/loss.hpp"
#include "tdml/model.hpp"
#include "tdml/record.hpp"

namespace tdml {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  std::uint64_t step = 0;

  AdamState() = default;
  explicit AdamState(std::size_t size) : first_moment(size, 0.0), second_moment(size, 0.0) {}
};

// One bias-corrected Adam update, in place. Throws NonFiniteError (leaving
// params and state untouched) if any gradient entry is NaN or infinite.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               const AdamConfig& config);
void adam_step(ParamSet& params, const ParamSet& grads, AdamState& state, const AdamConfig& config);

struct TrainConfig {
  double margin = 0.2;
  AdamConfig adam;
  std::size_t epochs = 30;
  std::size_t classes_per_batch = 10;  // P
  std::size_t samples_per_class = 3;   // K
  LossNormalization normalization = LossNormalization::kSum;
  bool flip_augment = true;
  std::uint64_t seed = 0;

  void validate() const;
};

struct EpochStats {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  double active_fraction = 0.0;  // active / valid triplets over the epoch
  double wall_seconds = 0.0;
};

using TrainHistory = std::vector<EpochStats>;

struct TrainResult {
  ParamSet params;
  TrainHistory history;
};

struct TrainHooks {
  // Receives the `epoch=<n> loss=<float> active=<fraction>` progress lines.
  std::ostream* progress = nullptr;
  // Called after every epoch with the current parameters.
  std::function<void(std::size_t epoch, const ParamSet&)> on_epoch_end;
};

// Maps string labels to dense ids in sorted label order.
std::vector<int> encode_labels(std::span<const Record> records);

// Trains from init_params(model_config, config.seed) unless initial params
// are supplied.
TrainResult train(std::span<const Record> dataset, const ModelConfig& model_config,
                  const TrainConfig& config, std::optional<ParamSet> initial = std::nullopt,
                  const TrainHooks& hooks = {});

// Copies every layer of `trained` whose shape matches the same layer of
// `fresh`, front to back, stopping at the first mismatch.
ParamSet warm_start(const ParamSet& fresh, const ParamSet& trained);

std::string format_progress(const EpochStats& stats);

}  // namespace tdml
