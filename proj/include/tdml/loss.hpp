#pragma once

#include <cstddef>
#include <span>
#include <string_view>

#include "tdml/numerics.hpp"

namespace tdml {

// Embeddings (one row per sample) with their integer class ids.
struct TripletBatchView {
  const Matrix& embeddings;
  std::span<const int> labels;
};

// Checks n >= 2, label count and unit-norm rows (within 1e-9).
void validate_batch(const TripletBatchView& batch);

enum class LossNormalization { kSum, kMeanValid, kMeanActive };

LossNormalization parse_normalization(std::string_view name);
std::string_view to_string(LossNormalization mode);

struct LossResult {
  double total_loss = 0.0;
  Matrix grad;  // d total_loss / d embeddings
  std::size_t active_triplets = 0;
  std::size_t valid_triplets = 0;
};

// max(d(a,p) - d(a,n) + margin, 0) with d the squared Euclidean distance.
double triplet_loss_single(std::span<const double> anchor, std::span<const double> positive,
                           std::span<const double> negative, double margin);

// Number of ordered (a, p, n) with label[a] == label[p], a != p, label[n] != label[a].
std::size_t valid_triplet_count(std::span<const int> labels);

// Hinge loss summed over every valid triplet in the batch, then scaled by the
// normalization mode. A hinge of exactly 0 is inactive and contributes no
// gradient. Throws NoValidTripletError when fewer than two classes are present.
LossResult batch_all_loss(const TripletBatchView& batch, double margin,
                          LossNormalization normalization = LossNormalization::kSum);

// Reference evaluation of the summed loss by an explicit triple loop.
double brute_force_batch_all(const TripletBatchView& batch, double margin);

}  // namespace tdml
