#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace tdml {

// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  Matrix transposed() const;

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// a (n x k) times b (k x m).
Matrix matmul(const Matrix& a, const Matrix& b);
// a (n x k) times b^T where b is (m x k).
Matrix matmul_transposed(const Matrix& a, const Matrix& b);

double sq_dist(std::span<const double> a, std::span<const double> b);
double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> a);
bool all_finite(std::span<const double> values);

// Squared Euclidean distance between every pair of rows, computed from
// direct differences. Symmetric with an exact-zero diagonal.
Matrix pairwise_sq_dist(const Matrix& x);

// Same result through |a|^2 + |b|^2 - 2ab. Negative round-off is clamped to 0.
Matrix pairwise_sq_dist_expanded(const Matrix& x);

inline constexpr double kNormEpsilon = 1e-12;

// Scales every row to unit Euclidean norm. Throws DegenerateInputError
// naming the first row whose norm is <= kNormEpsilon.
Matrix l2_normalize_rows(const Matrix& x);

struct EigenDecomposition {
  std::vector<double> values;  // descending
  Matrix vectors;              // column i pairs with values[i]
};

// Cyclic Jacobi eigensolver for symmetric matrices.
EigenDecomposition sym_eig(const Matrix& a, double tol = 1e-12, int max_sweeps = 100);

}  // namespace tdml
