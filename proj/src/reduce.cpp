#include "tdml/reduce.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace tdml {

PcaModel pca_fit(const Matrix& x, std::size_t k) {
  const std::size_t n = x.rows();
  const std::size_t dim = x.cols();
  if (n < 2) throw std::invalid_argument("pca_fit: need at least 2 rows");
  if (k < 1 || k > std::min(n - 1, dim)) {
    throw std::invalid_argument("pca_fit: k = " + std::to_string(k) + " outside [1, " +
                                std::to_string(std::min(n - 1, dim)) + "]");
  }
  if (!all_finite(x.data())) throw std::invalid_argument("pca_fit: non-finite input");

  PcaModel model;
  model.mean.assign(dim, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < dim; ++j) model.mean[j] += x(i, j);
  for (double& m : model.mean) m /= static_cast<double>(n);

  Matrix cov(dim, dim);
  std::vector<double> centered(dim);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < dim; ++j) centered[j] = x(i, j) - model.mean[j];
    for (std::size_t a = 0; a < dim; ++a)
      for (std::size_t b = a; b < dim; ++b) cov(a, b) += centered[a] * centered[b];
  }
  const double inv = 1.0 / static_cast<double>(n - 1);
  for (std::size_t a = 0; a < dim; ++a)
    for (std::size_t b = a; b < dim; ++b) cov(b, a) = cov(a, b) = cov(a, b) * inv;

  const EigenDecomposition eig = sym_eig(cov);
  model.components = Matrix(k, dim);
  model.eigenvalues.resize(k);
  for (std::size_t c = 0; c < k; ++c) {
    double lambda = eig.values[c];
    if (lambda < 0.0) {
      if (lambda < -1e-10 * std::max(1.0, eig.values[0]))
        throw std::runtime_error("pca_fit: covariance has a negative eigenvalue");
      lambda = 0.0;
    }
    model.eigenvalues[c] = lambda;

    std::size_t pivot = 0;
    for (std::size_t j = 1; j < dim; ++j)
      if (std::abs(eig.vectors(j, c)) > std::abs(eig.vectors(pivot, c))) pivot = j;
    const double sign = eig.vectors(pivot, c) < 0.0 ? -1.0 : 1.0;
    for (std::size_t j = 0; j < dim; ++j) model.components(c, j) = sign * eig.vectors(j, c);
  }
  return model;
}

Matrix pca_transform(const PcaModel& model, const Matrix& x, bool renormalize) {
  if (x.cols() != model.input_dim()) {
    throw std::invalid_argument("pca_transform: input has " + std::to_string(x.cols()) +
                                " columns, model expects " + std::to_string(model.input_dim()));
  }
  const std::size_t k = model.output_dim();
  Matrix y(x.rows(), k);
  std::vector<double> centered(x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = 0; j < x.cols(); ++j) centered[j] = x(i, j) - model.mean[j];
    for (std::size_t c = 0; c < k; ++c) y(i, c) = dot(centered, model.components.row(c));
  }
  return renormalize ? l2_normalize_rows(y) : y;
}

Matrix pca_inverse_transform(const PcaModel& model, const Matrix& y) {
  if (y.cols() != model.output_dim())
    throw std::invalid_argument("pca_inverse_transform: dimension mismatch");
  Matrix x = matmul(y, model.components);
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) x(i, j) += model.mean[j];
  return x;
}

}  // namespace tdml
