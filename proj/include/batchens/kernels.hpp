#pragma once

#include "batchens/matrix.hpp"

// Raw dense kernels. Each kernel exists in two variants: a plain serial
// reference and an OpenMP-parallel version. The parallel variants distribute
// whole output rows (or output elements) across threads while keeping each
// element's accumulation order identical to the serial loop, so their results
// are bitwise equal to the reference — the tests assert this and the rest of
// the library relies on it for reproducibility.
//
// The dispatching wrappers in matrix.hpp pick the parallel variant when
// OpenMP is available and the problem is large enough to amortize the fork.

namespace batchens::kernels {

// out[p×r] = a[p×q] * b[q×r]. out must be pre-sized and zeroed by the caller.
void matmul_serial(const Matrix2D& a, const Matrix2D& b, Matrix2D& out);
void matmul_parallel(const Matrix2D& a, const Matrix2D& b, Matrix2D& out);

// out[q×r] = aᵀ[q×p] * b[p×r].
void matmul_transpose_a_serial(const Matrix2D& a, const Matrix2D& b, Matrix2D& out);
void matmul_transpose_a_parallel(const Matrix2D& a, const Matrix2D& b, Matrix2D& out);

// out[p×q] = a[p×r] * bᵀ[r×q]  (b is q×r).
void matmul_transpose_b_serial(const Matrix2D& a, const Matrix2D& b, Matrix2D& out);
void matmul_transpose_b_parallel(const Matrix2D& a, const Matrix2D& b, Matrix2D& out);

void hadamard_serial(const Matrix2D& a, const Matrix2D& b, Matrix2D& out);
void hadamard_parallel(const Matrix2D& a, const Matrix2D& b, Matrix2D& out);

void softmax_rows_serial(const Matrix2D& logits, Matrix2D& out);
void softmax_rows_parallel(const Matrix2D& logits, Matrix2D& out);

// True when the library was built with OpenMP support.
bool openmp_enabled();
int max_threads();

}  // namespace batchens::kernels
