#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tdml/numerics.hpp"
#include "tdml/record.hpp"

namespace tdml {

struct RankedEntry {
  std::size_t index;  // row in the index
  std::string id;
  std::string label;
  double distance;
};

using RankedList = std::vector<RankedEntry>;

// Exhaustive squared-Euclidean index. Ties in distance are ordered by
// ascending id (byte-wise string order).
class EmbeddingIndex {
 public:
  static EmbeddingIndex build(std::span<const VectorRecord> records);

  std::size_t size() const noexcept { return ids_.size(); }
  std::size_t dim() const noexcept { return vectors_.cols(); }
  const std::vector<std::string>& ids() const noexcept { return ids_; }
  const std::vector<std::string>& labels() const noexcept { return labels_; }
  const Matrix& vectors() const noexcept { return vectors_; }
  std::optional<std::size_t> find(const std::string& id) const;

  // The k nearest rows to q (all candidates if k exceeds them).
  RankedList query(std::span<const double> q, std::size_t k,
                   const std::optional<std::string>& exclude_id = std::nullopt) const;

  // Every candidate row index in ranked order; `exclude` removes one row.
  std::vector<std::size_t> rank_all(std::span<const double> q,
                                    std::optional<std::size_t> exclude = std::nullopt) const;

 private:
  std::vector<std::string> ids_;
  std::vector<std::string> labels_;
  Matrix vectors_;
  std::vector<std::size_t> id_rank_;  // position of each row's id in sorted id order
};

}  // namespace tdml
