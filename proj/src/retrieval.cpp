#include "tdml/retrieval.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <unordered_map>
#include <utility>

namespace tdml {

EmbeddingIndex EmbeddingIndex::build(std::span<const VectorRecord> records) {
  if (records.empty()) throw std::invalid_argument("build_index: no records");
  const std::size_t dim = records.front().values.size();
  if (dim == 0) throw std::invalid_argument("build_index: zero-length vectors");

  EmbeddingIndex index;
  index.vectors_ = Matrix(records.size(), dim);
  std::unordered_map<std::string, std::size_t> seen;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (r.values.size() != dim) {
      throw std::invalid_argument("build_index: record '" + r.id + "' has length " +
                                  std::to_string(r.values.size()) + ", expected " +
                                  std::to_string(dim));
    }
    if (!all_finite(r.values))
      throw std::invalid_argument("build_index: record '" + r.id + "' has non-finite values");
    if (!seen.emplace(r.id, i).second)
      throw std::invalid_argument("build_index: duplicate id '" + r.id + "'");
    index.ids_.push_back(r.id);
    index.labels_.push_back(r.label);
    std::copy(r.values.begin(), r.values.end(), index.vectors_.row(i).begin());
  }

  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return index.ids_[a] < index.ids_[b]; });
  index.id_rank_.resize(records.size());
  for (std::size_t r = 0; r < order.size(); ++r) index.id_rank_[order[r]] = r;
  return index;
}

std::optional<std::size_t> EmbeddingIndex::find(const std::string& id) const {
  auto it = std::find(ids_.begin(), ids_.end(), id);
  if (it == ids_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - ids_.begin());
}

std::vector<std::size_t> EmbeddingIndex::rank_all(std::span<const double> q,
                                                  std::optional<std::size_t> exclude) const {
  if (q.size() != dim()) {
    throw std::invalid_argument("query: vector length " + std::to_string(q.size()) +
                                " does not match index dimension " + std::to_string(dim()));
  }
  std::vector<std::pair<double, std::size_t>> scored;
  scored.reserve(size());
  for (std::size_t i = 0; i < size(); ++i) {
    if (exclude && *exclude == i) continue;
    scored.emplace_back(sq_dist(q, vectors_.row(i)), i);
  }
  std::sort(scored.begin(), scored.end(), [&](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first < b.first;
    return id_rank_[a.second] < id_rank_[b.second];
  });
  std::vector<std::size_t> out;
  out.reserve(scored.size());
  for (const auto& s : scored) out.push_back(s.second);
  return out;
}

RankedList EmbeddingIndex::query(std::span<const double> q, std::size_t k,
                                 const std::optional<std::string>& exclude_id) const {
  if (k < 1) throw std::invalid_argument("query: k must be >= 1");
  std::optional<std::size_t> exclude;
  if (exclude_id) exclude = find(*exclude_id);
  const auto order = rank_all(q, exclude);
  RankedList out;
  const std::size_t take = std::min(k, order.size());
  out.reserve(take);
  for (std::size_t r = 0; r < take; ++r) {
    const std::size_t i = order[r];
    out.push_back({i, ids_[i], labels_[i], sq_dist(q, vectors_.row(i))});
  }
  return out;
}

}  // namespace tdml
