#include "batchens/layers.hpp"

#include <cmath>
#include <cstdint>
#include <string>

#include "batchens/error.hpp"

namespace batchens {

namespace {

using I64 = std::int64_t;

void check_assign(const std::vector<std::size_t>& assign, std::size_t batch,
                  std::size_t members) {
  if (assign.size() != batch) {
    throw ShapeError("member assignment has " + std::to_string(assign.size()) +
                     " entries for a batch of " + std::to_string(batch));
  }
  for (std::size_t b = 0; b < assign.size(); ++b) {
    if (assign[b] >= members) {
      throw IndexError("member assignment " + std::to_string(assign[b]) +
                       " at row " + std::to_string(b) + " out of range [0," +
                       std::to_string(members) + ")");
    }
  }
}

}  // namespace

Matrix2D apply_activation(Activation act, const Matrix2D& a) {
  if (act == Activation::kIdentity) return a;
  Matrix2D y(a.rows(), a.cols());
  const I64 n = static_cast<I64>(a.size());
  const double* in = a.data();
  double* out = y.data();
#pragma omp parallel for schedule(static)
  for (I64 i = 0; i < n; ++i) out[i] = in[i] > 0.0 ? in[i] : 0.0;
  return y;
}

Matrix2D activation_backward(Activation act, const Matrix2D& pre_activation,
                             const Matrix2D& grad_output) {
  if (!pre_activation.same_shape(grad_output)) {
    throw ShapeError("activation_backward: shapes differ, " +
                     pre_activation.shape_str() + " vs " +
                     grad_output.shape_str());
  }
  if (act == Activation::kIdentity) return grad_output;
  Matrix2D g(grad_output.rows(), grad_output.cols());
  const I64 n = static_cast<I64>(g.size());
  const double* a = pre_activation.data();
  const double* go = grad_output.data();
  double* out = g.data();
#pragma omp parallel for schedule(static)
  for (I64 i = 0; i < n; ++i) out[i] = a[i] > 0.0 ? go[i] : 0.0;
  return g;
}

BatchEnsembleLayer::BatchEnsembleLayer(std::size_t in_dim, std::size_t out_dim,
                                       std::size_t members, Activation act)
    : slow(in_dim, out_dim),
      fast_r(members, in_dim, 1.0),
      fast_s(members, out_dim, 1.0),
      bias(members, out_dim, 0.0),
      act(act) {
  if (members == 0) throw ArgumentError("ensemble size must be at least 1");
  if (in_dim == 0 || out_dim == 0) {
    throw ArgumentError("layer dimensions must be positive");
  }
}

std::size_t BatchEnsembleLayer::param_count() const {
  return slow.size() + fast_r.size() + fast_s.size() + bias.size();
}

DenseLayer::DenseLayer(std::size_t in_dim, std::size_t out_dim, Activation act)
    : weight(in_dim, out_dim), bias(1, out_dim, 0.0), act(act) {
  if (in_dim == 0 || out_dim == 0) {
    throw ArgumentError("layer dimensions must be positive");
  }
}

DropoutLayer::DropoutLayer(double rate) : rate(rate) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw ArgumentError("dropout rate must lie in [0,1), got " +
                        std::to_string(rate));
  }
}

void init_batch_ensemble(BatchEnsembleLayer& layer, SeededRng& rng,
                         FastInit init, double gaussian_std) {
  const double bound = std::sqrt(6.0 / static_cast<double>(layer.in_dim()));
  for (double& w : layer.slow.values()) w = rng.next_uniform(-bound, bound);
  if (init == FastInit::kRandomSign) {
    for (double& v : layer.fast_r.values()) v = rng.next_sign();
    for (double& v : layer.fast_s.values()) v = rng.next_sign();
  } else if (init == FastInit::kGaussianOne) {
    for (double& v : layer.fast_r.values()) v = 1.0 + gaussian_std * rng.next_gaussian();
    for (double& v : layer.fast_s.values()) v = 1.0 + gaussian_std * rng.next_gaussian();
  } else {
    layer.fast_r.fill(1.0);
    layer.fast_s.fill(1.0);
  }
  layer.bias.fill(0.0);
}

void init_dense(DenseLayer& layer, SeededRng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(layer.in_dim()));
  for (double& w : layer.weight.values()) w = rng.next_uniform(-bound, bound);
  layer.bias.fill(0.0);
}

Matrix2D member_weight(const BatchEnsembleLayer& layer, std::size_t i) {
  if (i >= layer.members()) {
    throw IndexError("member index " + std::to_string(i) +
                     " out of range [0," + std::to_string(layer.members()) + ")");
  }
  std::vector<double> r(layer.in_dim()), s(layer.out_dim());
  for (std::size_t j = 0; j < r.size(); ++j) r[j] = layer.fast_r(i, j);
  for (std::size_t k = 0; k < s.size(); ++k) s[k] = layer.fast_s(i, k);
  return hadamard(layer.slow, outer(r, s));
}

BeForwardResult be_forward(const BatchEnsembleLayer& layer, const Matrix2D& x,
                           const std::vector<std::size_t>& assign) {
  if (x.cols() != layer.in_dim()) {
    throw ShapeError("be_forward: input " + x.shape_str() +
                     " does not match layer input dim " +
                     std::to_string(layer.in_dim()));
  }
  const std::size_t batch = x.rows();
  check_assign(assign, batch, layer.members());

  const std::size_t m = layer.in_dim();
  const std::size_t n = layer.out_dim();

  BeForwardCache cache;
  cache.x = x;
  cache.assign = assign;

  // U = X ∘ R, row b scaled by r_{assign[b]}.
  cache.u = Matrix2D(batch, m);
#pragma omp parallel for schedule(static)
  for (I64 b = 0; b < static_cast<I64>(batch); ++b) {
    const double* xr = x.row(b);
    const double* rr = layer.fast_r.row(assign[b]);
    double* ur = cache.u.row(b);
    for (std::size_t j = 0; j < m; ++j) ur[j] = xr[j] * rr[j];
  }

  cache.v = matmul(cache.u, layer.slow);

  // A = V ∘ S + bias rows.
  cache.a = Matrix2D(batch, n);
#pragma omp parallel for schedule(static)
  for (I64 b = 0; b < static_cast<I64>(batch); ++b) {
    const double* vr = cache.v.row(b);
    const double* sr = layer.fast_s.row(assign[b]);
    const double* br = layer.bias.row(assign[b]);
    double* ar = cache.a.row(b);
    for (std::size_t k = 0; k < n; ++k) ar[k] = vr[k] * sr[k] + br[k];
  }

  BeForwardResult result;
  result.y = apply_activation(layer.act, cache.a);
  result.cache = std::move(cache);
  return result;
}

BeGradients be_backward(const BatchEnsembleLayer& layer,
                        const Matrix2D& grad_pre, const BeForwardCache& cache) {
  const std::size_t batch = cache.x.rows();
  const std::size_t m = layer.in_dim();
  const std::size_t n = layer.out_dim();
  const std::size_t members = layer.members();

  if (cache.x.cols() != m || cache.u.cols() != m || cache.v.cols() != n ||
      cache.a.cols() != n || cache.u.rows() != batch ||
      cache.v.rows() != batch || cache.a.rows() != batch ||
      cache.assign.size() != batch) {
    throw StateError("be_backward: cache does not match this layer");
  }
  for (std::size_t b = 0; b < batch; ++b) {
    if (cache.assign[b] >= members) {
      throw StateError("be_backward: cache member assignment out of range");
    }
  }
  if (grad_pre.rows() != batch || grad_pre.cols() != n) {
    throw ShapeError("be_backward: gradient " + grad_pre.shape_str() +
                     " does not match activations " + cache.a.shape_str());
  }

  // D = G ∘ S.
  Matrix2D d(batch, n);
#pragma omp parallel for schedule(static)
  for (I64 b = 0; b < static_cast<I64>(batch); ++b) {
    const double* gr = grad_pre.row(b);
    const double* sr = layer.fast_s.row(cache.assign[b]);
    double* dr = d.row(b);
    for (std::size_t k = 0; k < n; ++k) dr[k] = gr[k] * sr[k];
  }

  BeGradients grads;
  grads.slow = matmul_transpose_a(cache.u, d);  // Uᵀ D

  Matrix2D du = matmul_transpose_b(d, layer.slow);  // D Wᵀ, B×m

  grads.x = Matrix2D(batch, m);
#pragma omp parallel for schedule(static)
  for (I64 b = 0; b < static_cast<I64>(batch); ++b) {
    const double* dur = du.row(b);
    const double* rr = layer.fast_r.row(cache.assign[b]);
    double* gx = grads.x.row(b);
    for (std::size_t j = 0; j < m; ++j) gx[j] = dur[j] * rr[j];
  }

  // Per-member reductions keep a fixed ascending row order per output
  // element, so they stay bitwise reproducible under OpenMP.
  grads.fast_r = Matrix2D(members, m, 0.0);
  grads.fast_s = Matrix2D(members, n, 0.0);
  grads.bias = Matrix2D(members, n, 0.0);
  for (std::size_t b = 0; b < batch; ++b) {
    const std::size_t i = cache.assign[b];
    const double* dur = du.row(b);
    const double* xr = cache.x.row(b);
    double* drr = grads.fast_r.row(i);
    for (std::size_t j = 0; j < m; ++j) drr[j] += dur[j] * xr[j];

    const double* gr = grad_pre.row(b);
    const double* vr = cache.v.row(b);
    double* dsr = grads.fast_s.row(i);
    double* dbr = grads.bias.row(i);
    for (std::size_t k = 0; k < n; ++k) {
      dsr[k] += gr[k] * vr[k];
      dbr[k] += gr[k];
    }
  }

  return grads;
}

DenseForwardResult dense_forward(const DenseLayer& layer, const Matrix2D& x) {
  if (x.cols() != layer.in_dim()) {
    throw ShapeError("dense_forward: input " + x.shape_str() +
                     " does not match layer input dim " +
                     std::to_string(layer.in_dim()));
  }
  DenseForwardCache cache;
  cache.x = x;
  cache.a = matmul(x, layer.weight);
  const std::size_t n = layer.out_dim();
  for (std::size_t b = 0; b < cache.a.rows(); ++b) {
    double* ar = cache.a.row(b);
    const double* br = layer.bias.row(0);
    for (std::size_t k = 0; k < n; ++k) ar[k] += br[k];
  }
  DenseForwardResult result;
  result.y = apply_activation(layer.act, cache.a);
  result.cache = std::move(cache);
  return result;
}

DenseGradients dense_backward(const DenseLayer& layer, const Matrix2D& grad_pre,
                              const DenseForwardCache& cache) {
  if (grad_pre.rows() != cache.a.rows() || grad_pre.cols() != cache.a.cols()) {
    throw ShapeError("dense_backward: gradient " + grad_pre.shape_str() +
                     " does not match activations " + cache.a.shape_str());
  }
  DenseGradients grads;
  grads.weight = matmul_transpose_a(cache.x, grad_pre);
  grads.bias = Matrix2D(1, layer.out_dim(), 0.0);
  for (std::size_t b = 0; b < grad_pre.rows(); ++b) {
    const double* gr = grad_pre.row(b);
    double* dbr = grads.bias.row(0);
    for (std::size_t k = 0; k < layer.out_dim(); ++k) dbr[k] += gr[k];
  }
  grads.x = matmul_transpose_b(grad_pre, layer.weight);
  return grads;
}

DropoutForwardResult dropout_forward(const DropoutLayer& layer,
                                     const Matrix2D& x, SeededRng& rng,
                                     bool sample) {
  DropoutForwardResult result;
  if (!sample || layer.rate == 0.0) {
    result.y = x;
    result.mask = Matrix2D(x.rows(), x.cols(), 1.0);
    return result;
  }
  const double keep = 1.0 - layer.rate;
  const double scale = 1.0 / keep;
  result.mask = Matrix2D(x.rows(), x.cols());
  result.y = Matrix2D(x.rows(), x.cols());
  // Mask draws consume the stream in row-major order.
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep_draw = rng.next_unit() < keep ? 1.0 : 0.0;
    result.mask.values()[i] = keep_draw;
    result.y.values()[i] = x.values()[i] * keep_draw * scale;
  }
  return result;
}

Matrix2D dropout_backward(const DropoutLayer& layer, const Matrix2D& grad_out,
                          const Matrix2D& mask) {
  if (!grad_out.same_shape(mask)) {
    throw ShapeError("dropout_backward: shapes differ, " +
                     grad_out.shape_str() + " vs " + mask.shape_str());
  }
  if (layer.rate == 0.0) return grad_out;
  Matrix2D g = hadamard(grad_out, mask);
  scale_in_place(g, 1.0 / (1.0 - layer.rate));
  return g;
}

}  // namespace batchens
