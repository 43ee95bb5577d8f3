// Kernel benchmark: serial reference vs the OpenMP variants, plus the
// tiled all-member prediction against a member-by-member loop. Prints a
// table of timings and double-checks that the parallel kernels return
// bitwise-identical results (the property the rest of the library relies
// on). The speedup assertion only applies when more than one thread is
// actually available; on a single-core host the numbers are informational.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <functional>
#include <string>
#include <vector>

#include "batchens/inference.hpp"
#include "batchens/kernels.hpp"
#include "batchens/matrix.hpp"
#include "batchens/model.hpp"
#include "batchens/rng.hpp"

using namespace batchens;

namespace {

double seconds_of(const std::function<void()>& fn, int reps) {
  fn();  // warm up and fault in the pages
  const auto start = std::chrono::steady_clock::now();
  for (int i = 0; i < reps; ++i) fn();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
             .count() /
         reps;
}

bool bits_equal(const Matrix2D& a, const Matrix2D& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.values().data(), b.values().data(),
                     a.size() * sizeof(double)) == 0;
}

Matrix2D random_matrix(std::size_t rows, std::size_t cols, SeededRng& rng) {
  Matrix2D m(rows, cols);
  for (double& v : m.values()) v = rng.next_uniform(-1.0, 1.0);
  return m;
}

struct KernelCase {
  const char* name;
  std::function<void(const Matrix2D&, const Matrix2D&, Matrix2D&)> serial;
  std::function<void(const Matrix2D&, const Matrix2D&, Matrix2D&)> parallel;
  std::size_t a_rows, a_cols, b_rows, b_cols, out_rows, out_cols;
};

}  // namespace

int main() {
  const int threads = kernels::openmp_enabled() ? kernels::max_threads() : 1;
  std::printf("openmp %s, %d thread(s)\n\n",
              kernels::openmp_enabled() ? "on" : "off", threads);

  SeededRng rng(99);
  const std::size_t kDim = 384;
  const std::vector<KernelCase> cases = {
      {"matmul", kernels::matmul_serial, kernels::matmul_parallel,
       kDim, kDim, kDim, kDim, kDim, kDim},
      {"matmul_transpose_a", kernels::matmul_transpose_a_serial,
       kernels::matmul_transpose_a_parallel, kDim, kDim, kDim, kDim, kDim, kDim},
      {"matmul_transpose_b", kernels::matmul_transpose_b_serial,
       kernels::matmul_transpose_b_parallel, kDim, kDim, kDim, kDim, kDim, kDim},
      {"hadamard", kernels::hadamard_serial, kernels::hadamard_parallel,
       kDim, kDim, kDim, kDim, kDim, kDim},
      {"softmax_rows",
       [](const Matrix2D& a, const Matrix2D&, Matrix2D& out) {
         kernels::softmax_rows_serial(a, out);
       },
       [](const Matrix2D& a, const Matrix2D&, Matrix2D& out) {
         kernels::softmax_rows_parallel(a, out);
       },
       kDim, kDim, kDim, kDim, kDim, kDim},
  };

  std::printf("%-20s %12s %12s %9s  %s\n", "kernel", "serial (ms)",
              "parallel (ms)", "speedup", "bitwise");
  bool all_bitwise = true;
  bool all_faster = true;
  for (const KernelCase& kc : cases) {
    Matrix2D a = random_matrix(kc.a_rows, kc.a_cols, rng);
    Matrix2D b = random_matrix(kc.b_rows, kc.b_cols, rng);
    Matrix2D out_serial(kc.out_rows, kc.out_cols);
    Matrix2D out_parallel(kc.out_rows, kc.out_cols);

    // The matmul kernels accumulate into a caller-zeroed output; include the
    // zeroing in both timed bodies so the comparison stays apples-to-apples.
    const double ts = seconds_of(
        [&] {
          out_serial.fill(0.0);
          kc.serial(a, b, out_serial);
        },
        5);
    const double tp = seconds_of(
        [&] {
          out_parallel.fill(0.0);
          kc.parallel(a, b, out_parallel);
        },
        5);
    const bool same = bits_equal(out_serial, out_parallel);
    all_bitwise = all_bitwise && same;
    if (tp >= ts) all_faster = false;
    std::printf("%-20s %12.3f %12.3f %8.2fx  %s\n", kc.name, ts * 1e3, tp * 1e3,
                ts / tp, same ? "yes" : "NO");
  }

  // Whole-model inference: one tiled pass for all members vs a loop of
  // single-member passes over the same rows.
  ModelSpec spec;
  spec.in_dim = 64;
  spec.hidden = {128, 128};
  spec.classes = 10;
  spec.members = 4;
  SeededRng model_rng = SeededRng(7).split(streams::kParamInit);
  Model model = build_model(spec, model_rng);
  Matrix2D x = random_matrix(256, spec.in_dim, rng);

  const double t_tiled =
      seconds_of([&] { ensemble_predict(model, x); }, 10);
  const double t_loop = seconds_of(
      [&] {
        for (std::size_t i = 0; i < spec.members; ++i) member_predict(model, x, i);
      },
      10);
  std::printf("\n%-20s %12.3f ms\n", "tiled all-member", t_tiled * 1e3);
  std::printf("%-20s %12.3f ms (member-by-member loop)\n", "sequential",
              t_loop * 1e3);

  if (!all_bitwise) {
    std::printf("\nFAIL: a parallel kernel diverged from the serial reference\n");
    return 1;
  }
  if (threads > 1 && !all_faster) {
    std::printf("\nFAIL: a parallel kernel was slower despite %d threads\n",
                threads);
    return 1;
  }
  std::printf("\nok\n");
  return 0;
}
