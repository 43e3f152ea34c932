#pragma once

#include <cstddef>
#include <vector>

#include "tdml/numerics.hpp"

namespace tdml {

struct PcaModel {
  std::vector<double> mean;         // D
  Matrix components;                // k x D, orthonormal rows
  std::vector<double> eigenvalues;  // k, descending, >= 0

  std::size_t input_dim() const noexcept { return mean.size(); }
  std::size_t output_dim() const noexcept { return components.rows(); }

  bool operator==(const PcaModel&) const = default;
};

// Top-k principal axes of the rows of x, from the (n-1)-normalized sample
// covariance. Each component's largest-magnitude entry is made positive.
PcaModel pca_fit(const Matrix& x, std::size_t k);

// (x - mean) components^T, optionally with rows rescaled to unit norm.
Matrix pca_transform(const PcaModel& model, const Matrix& x, bool renormalize = true);

// y components + mean; inverse of pca_transform without renormalization on
// the retained subspace.
Matrix pca_inverse_transform(const PcaModel& model, const Matrix& y);

}  // namespace tdml
