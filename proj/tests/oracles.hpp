#pragma once

// Independent slow-path evaluations used to gate the vectorized library
// implementations. Deliberately written with plain nested loops and no calls
// into the library's math kernels, so a shared bug can't hide in both paths.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

#include "batchens/layers.hpp"
#include "batchens/matrix.hpp"

namespace batchens::oracle {

// Per-example path: materialize member assign[b]'s effective weight
// elementwise and push row b through it. O(B·m·n) per row, test scale only.
inline Matrix2D be_forward_reference(const BatchEnsembleLayer& layer,
                                     const Matrix2D& x,
                                     const std::vector<std::size_t>& assign) {
  const std::size_t batch = x.rows();
  const std::size_t m = layer.in_dim();
  const std::size_t n = layer.out_dim();
  Matrix2D y(batch, n);
  for (std::size_t b = 0; b < batch; ++b) {
    const std::size_t i = assign[b];
    for (std::size_t k = 0; k < n; ++k) {
      double acc = 0.0;
      for (std::size_t j = 0; j < m; ++j) {
        const double w_eff =
            layer.slow(j, k) * layer.fast_r(i, j) * layer.fast_s(i, k);
        acc += x(b, j) * w_eff;
      }
      acc += layer.bias(i, k);
      if (layer.act == Activation::kRelu && acc < 0.0) acc = 0.0;
      y(b, k) = acc;
    }
  }
  return y;
}

// Central finite difference of `loss()` w.r.t. every entry of `params`.
// `params` must be reachable by the loss closure; it is perturbed in place
// and restored.
inline Matrix2D central_diff(Matrix2D& params,
                             const std::function<double()>& loss,
                             double eps = 1e-5) {
  Matrix2D g(params.rows(), params.cols());
  for (std::size_t idx = 0; idx < params.size(); ++idx) {
    const double saved = params.values()[idx];
    params.values()[idx] = saved + eps;
    const double up = loss();
    params.values()[idx] = saved - eps;
    const double down = loss();
    params.values()[idx] = saved;
    g.values()[idx] = (up - down) / (2.0 * eps);
  }
  return g;
}

// Worst entry of |analytic − fd| / (rel·max(|analytic|,|fd|) + floor).
// A value ≤ 1 means every entry is inside the tolerance envelope.
inline double grad_err_ratio(const Matrix2D& analytic, const Matrix2D& fd,
                             double rel = 1e-6, double floor = 1e-8) {
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double a = analytic.values()[i];
    const double f = fd.values()[i];
    const double allowed = rel * std::max(std::fabs(a), std::fabs(f)) + floor;
    worst = std::max(worst, std::fabs(a - f) / allowed);
  }
  return worst;
}

}  // namespace batchens::oracle
