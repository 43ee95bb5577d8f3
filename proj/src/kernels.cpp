#include "batchens/kernels.hpp"

#include <cmath>
#include <cstdint>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace batchens::kernels {

bool openmp_enabled() {
#ifdef _OPENMP
  return true;
#else
  return false;
#endif
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

namespace {

// ikj loop body shared by both matmul variants: for a fixed output row the
// accumulation order over k is the same regardless of how rows are
// distributed across threads.
inline void matmul_row(const Matrix2D& a, const Matrix2D& b, Matrix2D& out,
                       std::size_t i) {
  const std::size_t q = a.cols();
  const std::size_t r = b.cols();
  const double* arow = a.row(i);
  double* orow = out.row(i);
  for (std::size_t k = 0; k < q; ++k) {
    const double aik = arow[k];
    const double* brow = b.row(k);
    for (std::size_t j = 0; j < r; ++j) {
      orow[j] += aik * brow[j];
    }
  }
}

inline void matmul_ta_row(const Matrix2D& a, const Matrix2D& b, Matrix2D& out,
                          std::size_t j) {
  // out[j][k] = sum_i a[i][j] * b[i][k], i ascending.
  const std::size_t p = a.rows();
  const std::size_t r = b.cols();
  double* orow = out.row(j);
  for (std::size_t i = 0; i < p; ++i) {
    const double aij = a(i, j);
    const double* brow = b.row(i);
    for (std::size_t k = 0; k < r; ++k) {
      orow[k] += aij * brow[k];
    }
  }
}

inline void matmul_tb_row(const Matrix2D& a, const Matrix2D& b, Matrix2D& out,
                          std::size_t i) {
  // out[i][j] = sum_k a[i][k] * b[j][k], k ascending.
  const std::size_t r = a.cols();
  const std::size_t q = b.rows();
  const double* arow = a.row(i);
  double* orow = out.row(i);
  for (std::size_t j = 0; j < q; ++j) {
    const double* brow = b.row(j);
    double acc = 0.0;
    for (std::size_t k = 0; k < r; ++k) {
      acc += arow[k] * brow[k];
    }
    orow[j] = acc;
  }
}

inline void softmax_row(const Matrix2D& logits, Matrix2D& out, std::size_t i) {
  const std::size_t c = logits.cols();
  const double* in = logits.row(i);
  double* o = out.row(i);
  double mx = in[0];
  for (std::size_t j = 1; j < c; ++j) {
    if (in[j] > mx) mx = in[j];
  }
  double sum = 0.0;
  for (std::size_t j = 0; j < c; ++j) {
    o[j] = std::exp(in[j] - mx);
    sum += o[j];
  }
  const double inv = 1.0 / sum;
  for (std::size_t j = 0; j < c; ++j) {
    o[j] *= inv;
  }
}

using I64 = std::int64_t;

}  // namespace

void matmul_serial(const Matrix2D& a, const Matrix2D& b, Matrix2D& out) {
  for (std::size_t i = 0; i < a.rows(); ++i) matmul_row(a, b, out, i);
}

void matmul_parallel(const Matrix2D& a, const Matrix2D& b, Matrix2D& out) {
  const I64 p = static_cast<I64>(a.rows());
#pragma omp parallel for schedule(static)
  for (I64 i = 0; i < p; ++i) matmul_row(a, b, out, static_cast<std::size_t>(i));
}

void matmul_transpose_a_serial(const Matrix2D& a, const Matrix2D& b, Matrix2D& out) {
  for (std::size_t j = 0; j < a.cols(); ++j) matmul_ta_row(a, b, out, j);
}

void matmul_transpose_a_parallel(const Matrix2D& a, const Matrix2D& b, Matrix2D& out) {
  const I64 q = static_cast<I64>(a.cols());
#pragma omp parallel for schedule(static)
  for (I64 j = 0; j < q; ++j) matmul_ta_row(a, b, out, static_cast<std::size_t>(j));
}

void matmul_transpose_b_serial(const Matrix2D& a, const Matrix2D& b, Matrix2D& out) {
  for (std::size_t i = 0; i < a.rows(); ++i) matmul_tb_row(a, b, out, i);
}

void matmul_transpose_b_parallel(const Matrix2D& a, const Matrix2D& b, Matrix2D& out) {
  const I64 p = static_cast<I64>(a.rows());
#pragma omp parallel for schedule(static)
  for (I64 i = 0; i < p; ++i) matmul_tb_row(a, b, out, static_cast<std::size_t>(i));
}

void hadamard_serial(const Matrix2D& a, const Matrix2D& b, Matrix2D& out) {
  const std::size_t n = a.size();
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.data();
  for (std::size_t i = 0; i < n; ++i) po[i] = pa[i] * pb[i];
}

void hadamard_parallel(const Matrix2D& a, const Matrix2D& b, Matrix2D& out) {
  const I64 n = static_cast<I64>(a.size());
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.data();
#pragma omp parallel for schedule(static)
  for (I64 i = 0; i < n; ++i) po[i] = pa[i] * pb[i];
}

void softmax_rows_serial(const Matrix2D& logits, Matrix2D& out) {
  for (std::size_t i = 0; i < logits.rows(); ++i) softmax_row(logits, out, i);
}

void softmax_rows_parallel(const Matrix2D& logits, Matrix2D& out) {
  const I64 n = static_cast<I64>(logits.rows());
#pragma omp parallel for schedule(static)
  for (I64 i = 0; i < n; ++i) softmax_row(logits, out, static_cast<std::size_t>(i));
}

}  // namespace batchens::kernels
