#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "tdml/record.hpp"

namespace tdml {

// Mini-batches of P classes x K samples (indices into the label array).
struct BatchPlan {
  std::vector<std::vector<std::size_t>> batches;
  // Classes with fewer than K records; they are sampled with replacement.
  std::vector<int> small_classes;

  bool operator==(const BatchPlan&) const = default;
};

// Builds one epoch of P x K batches. Every class with at least K records is
// permuted per epoch and cut into K-sized chunks (the last chunk wraps to the
// front of the permutation), so each of its records appears in every epoch.
// Chunks are dealt into batches of P distinct classes, always drawing from
// the classes with the most chunks left; a final short round is topped up
// with extra chunks from other classes. Deterministic in (seed, epoch).
BatchPlan make_pk_batches(std::span<const int> labels, std::size_t classes_per_batch,
                          std::size_t samples_per_class, std::uint64_t seed, std::uint64_t epoch);

// Reverses the width axis when flip_horizontal, the height axis when
// flip_vertical. Channels are untouched.
FeatureMap augment_flip(const FeatureMap& map, bool flip_horizontal, bool flip_vertical);

// Draws two fair bits from rng and flips accordingly. Vector payloads are
// returned unchanged and *skipped is set when provided.
Payload augment_flip(const Payload& payload, std::mt19937_64& rng, bool* skipped = nullptr);

}  // namespace tdml
