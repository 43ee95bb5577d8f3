#include "batchens/matrix.hpp"

#include <algorithm>
#include <cmath>

#include "batchens/error.hpp"
#include "batchens/kernels.hpp"

namespace batchens {

namespace {

// Below this many output elements the OpenMP fork costs more than it saves.
constexpr std::size_t kParallelThreshold = 4096;

bool use_parallel(std::size_t work) {
  return kernels::openmp_enabled() && work >= kParallelThreshold;
}

}  // namespace

Matrix2D::Matrix2D(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) {
      throw ShapeError("ragged initializer: expected " + std::to_string(cols_) +
                       " columns, got " + std::to_string(r.size()));
    }
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Matrix2D Matrix2D::identity(std::size_t n) {
  Matrix2D m(n, n, 0.0);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

std::string Matrix2D::shape_str() const {
  return std::to_string(rows_) + "x" + std::to_string(cols_);
}

bool Matrix2D::is_finite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](double v) { return std::isfinite(v); });
}

void Matrix2D::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Matrix2D matmul(const Matrix2D& a, const Matrix2D& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dimensions differ, " + a.shape_str() +
                     " * " + b.shape_str());
  }
  Matrix2D out(a.rows(), b.cols(), 0.0);
  if (use_parallel(out.size() * a.cols())) {
    kernels::matmul_parallel(a, b, out);
  } else {
    kernels::matmul_serial(a, b, out);
  }
  return out;
}

Matrix2D matmul_transpose_a(const Matrix2D& a, const Matrix2D& b) {
  if (a.rows() != b.rows()) {
    throw ShapeError("matmul_transpose_a: row counts differ, " + a.shape_str() +
                     " vs " + b.shape_str());
  }
  Matrix2D out(a.cols(), b.cols(), 0.0);
  if (use_parallel(out.size() * a.rows())) {
    kernels::matmul_transpose_a_parallel(a, b, out);
  } else {
    kernels::matmul_transpose_a_serial(a, b, out);
  }
  return out;
}

Matrix2D matmul_transpose_b(const Matrix2D& a, const Matrix2D& b) {
  if (a.cols() != b.cols()) {
    throw ShapeError("matmul_transpose_b: column counts differ, " +
                     a.shape_str() + " vs " + b.shape_str());
  }
  Matrix2D out(a.rows(), b.rows(), 0.0);
  if (use_parallel(out.size() * a.cols())) {
    kernels::matmul_transpose_b_parallel(a, b, out);
  } else {
    kernels::matmul_transpose_b_serial(a, b, out);
  }
  return out;
}

Matrix2D hadamard(const Matrix2D& a, const Matrix2D& b) {
  if (!a.same_shape(b)) {
    throw ShapeError("hadamard: shapes differ, " + a.shape_str() + " vs " +
                     b.shape_str());
  }
  Matrix2D out(a.rows(), a.cols());
  if (use_parallel(out.size())) {
    kernels::hadamard_parallel(a, b, out);
  } else {
    kernels::hadamard_serial(a, b, out);
  }
  return out;
}

Matrix2D outer(const std::vector<double>& r, const std::vector<double>& s) {
  if (r.empty() || s.empty()) {
    throw ArgumentError("outer: vectors must be nonempty");
  }
  Matrix2D out(r.size(), s.size());
  for (std::size_t j = 0; j < r.size(); ++j) {
    for (std::size_t k = 0; k < s.size(); ++k) {
      out(j, k) = r[j] * s[k];
    }
  }
  return out;
}

Matrix2D softmax_rows(const Matrix2D& logits) {
  for (double v : logits.values()) {
    if (std::isnan(v)) throw ArgumentError("softmax_rows: NaN in input");
  }
  Matrix2D out(logits.rows(), logits.cols());
  if (use_parallel(out.size())) {
    kernels::softmax_rows_parallel(logits, out);
  } else {
    kernels::softmax_rows_serial(logits, out);
  }
  return out;
}

Matrix2D transpose(const Matrix2D& a) {
  Matrix2D out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) {
      out(j, i) = a(i, j);
    }
  }
  return out;
}

Matrix2D add(const Matrix2D& a, const Matrix2D& b) {
  if (!a.same_shape(b)) {
    throw ShapeError("add: shapes differ, " + a.shape_str() + " vs " +
                     b.shape_str());
  }
  Matrix2D out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) {
    out.values()[i] = a.values()[i] + b.values()[i];
  }
  return out;
}

void scale_in_place(Matrix2D& a, double c) {
  for (double& v : a.values()) v *= c;
}

void add_scaled_in_place(Matrix2D& into, const Matrix2D& from, double c) {
  if (!into.same_shape(from)) {
    throw ShapeError("add_scaled_in_place: shapes differ, " + into.shape_str() +
                     " vs " + from.shape_str());
  }
  for (std::size_t i = 0; i < into.size(); ++i) {
    into.values()[i] += c * from.values()[i];
  }
}

std::vector<std::size_t> argmax_rows(const Matrix2D& m) {
  std::vector<std::size_t> out(m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const double* r = m.row(i);
    std::size_t best = 0;
    for (std::size_t j = 1; j < m.cols(); ++j) {
      if (r[j] > r[best]) best = j;
    }
    out[i] = best;
  }
  return out;
}

}  // namespace batchens
