#include "tdml/sampler.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>

namespace tdml {

namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::seed_seq seq{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                    static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

struct ClassPool {
  int label;
  std::vector<std::size_t> members;  // permuted for this epoch
  std::size_t chunks_left = 0;
  std::size_t next_chunk = 0;
};

std::vector<std::size_t> take_chunk(ClassPool& pool, std::size_t k, std::mt19937_64& rng) {
  std::vector<std::size_t> chunk;
  chunk.reserve(k);
  const std::size_t size = pool.members.size();
  if (size < k) {
    std::uniform_int_distribution<std::size_t> pick(0, size - 1);
    for (std::size_t i = 0; i < k; ++i) chunk.push_back(pool.members[pick(rng)]);
    return chunk;
  }
  const std::size_t start = pool.next_chunk * k;
  for (std::size_t i = 0; i < k; ++i) chunk.push_back(pool.members[(start + i) % size]);
  ++pool.next_chunk;
  return chunk;
}

// Extra chunk for a class whose regular chunks are used up: K distinct
// members at a random offset of the permutation.
std::vector<std::size_t> extra_chunk(const ClassPool& pool, std::size_t k, std::mt19937_64& rng) {
  const std::size_t size = pool.members.size();
  std::vector<std::size_t> chunk;
  std::uniform_int_distribution<std::size_t> pick(0, size - 1);
  if (size < k) {
    for (std::size_t i = 0; i < k; ++i) chunk.push_back(pool.members[pick(rng)]);
    return chunk;
  }
  const std::size_t start = pick(rng);
  for (std::size_t i = 0; i < k; ++i) chunk.push_back(pool.members[(start + i) % size]);
  return chunk;
}

}  // namespace

BatchPlan make_pk_batches(std::span<const int> labels, std::size_t classes_per_batch,
                          std::size_t samples_per_class, std::uint64_t seed, std::uint64_t epoch) {
  const std::size_t p = classes_per_batch;
  const std::size_t k = samples_per_class;
  if (p < 2) throw std::invalid_argument("make_pk_batches: P must be >= 2");
  if (k < 2) throw std::invalid_argument("make_pk_batches: K must be >= 2");

  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  if (by_class.size() < p) {
    throw std::invalid_argument("make_pk_batches: " + std::to_string(by_class.size()) +
                                " classes available, P = " + std::to_string(p));
  }
  if (p * k > labels.size()) {
    throw std::invalid_argument("make_pk_batches: P*K = " + std::to_string(p * k) +
                                " exceeds the " + std::to_string(labels.size()) + " records");
  }

  std::mt19937_64 rng(mix(seed, epoch));
  BatchPlan plan;
  std::vector<ClassPool> pools;
  pools.reserve(by_class.size());
  for (auto& [label, members] : by_class) {
    ClassPool pool{label, members};
    std::shuffle(pool.members.begin(), pool.members.end(), rng);
    if (pool.members.size() < k) {
      plan.small_classes.push_back(label);
      pool.chunks_left = 1;
    } else {
      pool.chunks_left = (pool.members.size() + k - 1) / k;
    }
    pools.push_back(std::move(pool));
  }
  std::shuffle(pools.begin(), pools.end(), rng);

  // Pool positions double as the random tie-break rank.
  std::vector<std::size_t> order(pools.size());
  std::iota(order.begin(), order.end(), 0);
  while (true) {
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return pools[a].chunks_left > pools[b].chunks_left;
    });
    if (pools[order[0]].chunks_left == 0) break;

    std::vector<std::size_t> batch;
    batch.reserve(p * k);
    std::size_t taken = 0;
    for (std::size_t idx : order) {
      if (taken == p) break;
      auto& pool = pools[idx];
      std::vector<std::size_t> chunk;
      if (pool.chunks_left > 0) {
        chunk = take_chunk(pool, k, rng);
        --pool.chunks_left;
      } else {
        chunk = extra_chunk(pool, k, rng);
      }
      batch.insert(batch.end(), chunk.begin(), chunk.end());
      ++taken;
    }
    plan.batches.push_back(std::move(batch));
    // Rotate tie-break ranks so topped-up rounds do not always pick the same classes.
    std::shuffle(order.begin(), order.end(), rng);
  }
  std::shuffle(plan.batches.begin(), plan.batches.end(), rng);
  return plan;
}

FeatureMap augment_flip(const FeatureMap& map, bool flip_horizontal, bool flip_vertical) {
  FeatureMap out(map.height, map.width, map.channels);
  for (std::size_t h = 0; h < map.height; ++h) {
    const std::size_t sh = flip_vertical ? map.height - 1 - h : h;
    for (std::size_t w = 0; w < map.width; ++w) {
      const std::size_t sw = flip_horizontal ? map.width - 1 - w : w;
      for (std::size_t c = 0; c < map.channels; ++c) out.at(h, w, c) = map.at(sh, sw, c);
    }
  }
  return out;
}

Payload augment_flip(const Payload& payload, std::mt19937_64& rng, bool* skipped) {
  const std::uint64_t bits = rng();
  if (const auto* m = std::get_if<FeatureMap>(&payload)) {
    if (skipped) *skipped = false;
    return augment_flip(*m, (bits & 1u) != 0, (bits & 2u) != 0);
  }
  if (skipped) *skipped = true;
  return payload;
}

}  // namespace tdml
