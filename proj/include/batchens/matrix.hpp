#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

namespace batchens {

// Dense row-major matrix of doubles. The single numeric carrier used by
// every other module; row index = example index throughout the library.
class Matrix2D {
 public:
  Matrix2D() = default;
  Matrix2D(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  // Row-major nested initializer, e.g. Matrix2D{{1, 2}, {3, 4}}.
  Matrix2D(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix2D identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double* row(std::size_t r) { return data_.data() + r * cols_; }
  const double* row(std::size_t r) const { return data_.data() + r * cols_; }

  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  bool same_shape(const Matrix2D& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }
  std::string shape_str() const;

  // True when every entry is finite (no NaN/Inf).
  bool is_finite() const;

  void fill(double v);

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// ---- core dense operations -------------------------------------------------
// All of these are pure: inputs are never mutated, results are fresh values.
// Internally they may run OpenMP-parallel loops; results are always bitwise
// identical to the serial reference kernels (see kernels.hpp).

// Standard matrix product a[p×q] * b[q×r], double-precision accumulation.
Matrix2D matmul(const Matrix2D& a, const Matrix2D& b);

// out[q×r] = aᵀ b for a[p×q], b[p×r], without materializing the transpose.
Matrix2D matmul_transpose_a(const Matrix2D& a, const Matrix2D& b);

// out[p×q] = a bᵀ for a[p×r], b[q×r], without materializing the transpose.
Matrix2D matmul_transpose_b(const Matrix2D& a, const Matrix2D& b);

// Element-wise (Hadamard) product; shapes must match.
Matrix2D hadamard(const Matrix2D& a, const Matrix2D& b);

// Rank-1 outer product r sᵀ of two nonempty vectors.
Matrix2D outer(const std::vector<double>& r, const std::vector<double>& s);

// Row-wise softmax with max-subtraction; rejects NaN input.
Matrix2D softmax_rows(const Matrix2D& logits);

Matrix2D transpose(const Matrix2D& a);
Matrix2D add(const Matrix2D& a, const Matrix2D& b);
void scale_in_place(Matrix2D& a, double c);
void add_scaled_in_place(Matrix2D& into, const Matrix2D& from, double c);

// Index of the largest entry per row (first maximum wins).
std::vector<std::size_t> argmax_rows(const Matrix2D& m);

}  // namespace batchens
