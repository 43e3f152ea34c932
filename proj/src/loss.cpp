#include "tdml/loss.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <string>

#include "tdml/errors.hpp"

namespace tdml {

namespace {

void check_shape(const TripletBatchView& batch, double margin) {
  if (batch.embeddings.rows() != batch.labels.size())
    throw std::invalid_argument("triplet batch: label count does not match embedding rows");
  if (batch.labels.size() < 2) throw std::invalid_argument("triplet batch: need at least 2 samples");
  if (!(margin >= 0.0)) throw std::invalid_argument("triplet batch: margin must be >= 0");
  const int first = batch.labels[0];
  if (std::all_of(batch.labels.begin(), batch.labels.end(), [&](int l) { return l == first; }))
    throw NoValidTripletError("triplet batch: only one class present, no valid triplet");
}

}  // namespace

void validate_batch(const TripletBatchView& batch) {
  if (batch.embeddings.rows() != batch.labels.size())
    throw std::invalid_argument("triplet batch: label count does not match embedding rows");
  if (batch.labels.size() < 2) throw std::invalid_argument("triplet batch: need at least 2 samples");
  for (std::size_t i = 0; i < batch.embeddings.rows(); ++i) {
    if (std::abs(norm(batch.embeddings.row(i)) - 1.0) > 1e-9)
      throw std::invalid_argument("triplet batch: row " + std::to_string(i) + " is not unit norm");
  }
}

LossNormalization parse_normalization(std::string_view name) {
  if (name == "sum") return LossNormalization::kSum;
  if (name == "mean_valid") return LossNormalization::kMeanValid;
  if (name == "mean_active") return LossNormalization::kMeanActive;
  throw std::invalid_argument("unknown loss normalization '" + std::string(name) + "'");
}

std::string_view to_string(LossNormalization mode) {
  switch (mode) {
    case LossNormalization::kSum:
      return "sum";
    case LossNormalization::kMeanValid:
      return "mean_valid";
    case LossNormalization::kMeanActive:
      return "mean_active";
  }
  return "sum";
}

double triplet_loss_single(std::span<const double> anchor, std::span<const double> positive,
                           std::span<const double> negative, double margin) {
  if (anchor.size() != positive.size() || anchor.size() != negative.size())
    throw std::invalid_argument("triplet_loss_single: dimension mismatch");
  if (!(margin >= 0.0)) throw std::invalid_argument("triplet_loss_single: margin must be >= 0");
  return std::max(sq_dist(anchor, positive) - sq_dist(anchor, negative) + margin, 0.0);
}

std::size_t valid_triplet_count(std::span<const int> labels) {
  std::map<int, std::size_t> sizes;
  for (int l : labels) ++sizes[l];
  std::size_t count = 0;
  for (int l : labels) {
    const std::size_t same = sizes[l];
    count += (same - 1) * (labels.size() - same);
  }
  return count;
}

LossResult batch_all_loss(const TripletBatchView& batch, double margin,
                          LossNormalization normalization) {
  check_shape(batch, margin);
  const Matrix& x = batch.embeddings;
  const auto labels = batch.labels;
  const std::size_t n = x.rows();
  const std::size_t dim = x.cols();
  const Matrix d = pairwise_sq_dist(x);

  LossResult result;
  result.grad = Matrix(n, dim);
  result.valid_triplets = valid_triplet_count(labels);

  // Coefficients of the per-triplet gradient, accumulated as
  // grad_a += 2 (x_n - x_p), grad_p += -2 (x_a - x_p), grad_n += 2 (x_a - x_n).
  // Each active triplet adds weight to the (a,p) and (a,n) pairs; pair weights
  // are expanded into row gradients once at the end.
  Matrix pos_weight(n, n);
  Matrix neg_weight(n, n);
  double total = 0.0;
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t p = 0; p < n; ++p) {
      if (p == a || labels[p] != labels[a]) continue;
      const double dap = d(a, p);
      for (std::size_t q = 0; q < n; ++q) {
        if (labels[q] == labels[a]) continue;
        const double hinge = dap - d(a, q) + margin;
        if (hinge > 0.0) {
          total += hinge;
          ++result.active_triplets;
          pos_weight(a, p) += 1.0;
          neg_weight(a, q) += 1.0;
        }
      }
    }
  }

  double scale = 1.0;
  switch (normalization) {
    case LossNormalization::kSum:
      break;
    case LossNormalization::kMeanValid:
      scale = 1.0 / static_cast<double>(result.valid_triplets);
      break;
    case LossNormalization::kMeanActive:
      if (result.active_triplets > 0) scale = 1.0 / static_cast<double>(result.active_triplets);
      break;
  }
  result.total_loss = total * scale;

  // d(a,p) contributes +2(x_a - x_p) to a and -2(x_a - x_p) to p;
  // d(a,n) contributes -2(x_a - x_n) to a and +2(x_a - x_n) to n.
  for (std::size_t a = 0; a < n; ++a) {
    auto ga = result.grad.row(a);
    auto xa = x.row(a);
    for (std::size_t j = 0; j < n; ++j) {
      const double wp = pos_weight(a, j);
      const double wn = neg_weight(a, j);
      if (wp == 0.0 && wn == 0.0) continue;
      const double w = 2.0 * scale * (wp - wn);
      auto gj = result.grad.row(j);
      auto xj = x.row(j);
      for (std::size_t k = 0; k < dim; ++k) {
        const double diff = w * (xa[k] - xj[k]);
        ga[k] += diff;
        gj[k] -= diff;
      }
    }
  }
  return result;
}

double brute_force_batch_all(const TripletBatchView& batch, double margin) {
  check_shape(batch, margin);
  const Matrix& x = batch.embeddings;
  const std::size_t n = x.rows();
  double total = 0.0;
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = 0; q < n; ++q) {
        if (a == p || batch.labels[a] != batch.labels[p] || batch.labels[q] == batch.labels[a])
          continue;
        total += triplet_loss_single(x.row(a), x.row(p), x.row(q), margin);
      }
  return total;
}

}  // namespace tdml
