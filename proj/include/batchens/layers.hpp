#pragma once

#include <cstddef>
#include <vector>

#include "batchens/matrix.hpp"
#include "batchens/rng.hpp"

namespace batchens {

enum class Activation { kIdentity, kRelu };

// Y = phi(A), elementwise.
Matrix2D apply_activation(Activation act, const Matrix2D& a);

// G = dY ∘ phi'(A): converts a post-activation gradient into the
// pre-activation gradient the layer backward passes expect.
Matrix2D activation_backward(Activation act, const Matrix2D& pre_activation,
                             const Matrix2D& grad_output);

// How the per-member fast weights are initialized.
enum class FastInit {
  kRandomSign,   // every entry an independent fair ±1 draw
  kGaussianOne,  // N(1, std) around the identity modulation, for ablations
  kUnit,         // all ones (identity modulation); consumes no RNG draws
};

// Ensemble dense layer: one shared m×n weight plus, per member, a rank-1
// modulation formed from an input-sized vector r_i and an output-sized
// vector s_i, and a per-member bias. Member i's effective weight is
// W ∘ r_i s_iᵀ but it is never materialized on the training or inference
// path; the vectorized forward computes phi(((X∘R)W)∘S + bias) directly.
struct BatchEnsembleLayer {
  Matrix2D slow;    // shared weight W, m×n
  Matrix2D fast_r;  // row i = r_i, M×m
  Matrix2D fast_s;  // row i = s_i, M×n
  Matrix2D bias;    // row i = member i's bias, M×n
  Activation act = Activation::kRelu;

  BatchEnsembleLayer() = default;
  BatchEnsembleLayer(std::size_t in_dim, std::size_t out_dim,
                     std::size_t members, Activation act = Activation::kRelu);

  std::size_t in_dim() const { return slow.rows(); }
  std::size_t out_dim() const { return slow.cols(); }
  std::size_t members() const { return fast_r.rows(); }

  // m·n + M·(m + 2n)
  std::size_t param_count() const;
};

// Plain dense layer (single-model baseline building block and task heads).
struct DenseLayer {
  Matrix2D weight;  // m×n
  Matrix2D bias;    // 1×n
  Activation act = Activation::kRelu;

  DenseLayer() = default;
  DenseLayer(std::size_t in_dim, std::size_t out_dim,
             Activation act = Activation::kRelu);

  std::size_t in_dim() const { return weight.rows(); }
  std::size_t out_dim() const { return weight.cols(); }
  std::size_t param_count() const { return weight.size() + bias.size(); }
};

// Inverted dropout.
struct DropoutLayer {
  double rate = 0.0;  // in [0, 1)

  DropoutLayer() = default;
  explicit DropoutLayer(double rate);
};

// Slow weight ~ U(−sqrt(6/m), sqrt(6/m)); fast weights per `init`
// (random ±1 signs by default); biases zero.
void init_batch_ensemble(BatchEnsembleLayer& layer, SeededRng& rng,
                         FastInit init = FastInit::kRandomSign,
                         double gaussian_std = 0.5);

void init_dense(DenseLayer& layer, SeededRng& rng);

// Materializes member i's effective weight W ∘ r_i s_iᵀ. Test/inspection
// path only; hot paths use the vectorized forms below.
Matrix2D member_weight(const BatchEnsembleLayer& layer, std::size_t i);

// ---- forward/backward ------------------------------------------------------

struct BeForwardCache {
  Matrix2D x;  // input, B×m
  Matrix2D u;  // X ∘ R, B×m
  Matrix2D v;  // U W, B×n
  Matrix2D a;  // pre-activation V ∘ S + bias rows, B×n
  std::vector<std::size_t> assign;
};

struct BeForwardResult {
  Matrix2D y;  // phi(A)
  BeForwardCache cache;
};

// Vectorized ensemble forward: row b runs through member assign[b].
BeForwardResult be_forward(const BatchEnsembleLayer& layer, const Matrix2D& x,
                           const std::vector<std::size_t>& assign);

struct BeGradients {
  Matrix2D slow;    // dW, m×n
  Matrix2D fast_r;  // row i = dr_i, M×m
  Matrix2D fast_s;  // row i = ds_i, M×n
  Matrix2D bias;    // row i = dbias_i, M×n
  Matrix2D x;       // dX, B×m
};

// Exact gradients of the vectorized forward. `grad_pre` is dL/dA, the
// gradient at the pre-activation output:
//   dW       = Uᵀ(G∘S)
//   ds_i     = Σ_{b: assign[b]=i} g_b ∘ v_b
//   dbias_i  = Σ_{b: assign[b]=i} g_b
//   dU       = (G∘S)Wᵀ
//   dX       = dU ∘ R
//   dr_i     = Σ_{b: assign[b]=i} du_b ∘ x_b
BeGradients be_backward(const BatchEnsembleLayer& layer,
                        const Matrix2D& grad_pre, const BeForwardCache& cache);

struct DenseForwardCache {
  Matrix2D x;  // B×m
  Matrix2D a;  // pre-activation XW + bias, B×n
};

struct DenseForwardResult {
  Matrix2D y;
  DenseForwardCache cache;
};

DenseForwardResult dense_forward(const DenseLayer& layer, const Matrix2D& x);

struct DenseGradients {
  Matrix2D weight;  // XᵀG
  Matrix2D bias;    // column sums of G
  Matrix2D x;       // GWᵀ
};

DenseGradients dense_backward(const DenseLayer& layer, const Matrix2D& grad_pre,
                              const DenseForwardCache& cache);

struct DropoutForwardResult {
  Matrix2D y;
  Matrix2D mask;  // entries in {0,1}
};

// `sample` = true draws a fresh Bernoulli(1−rate) mask and rescales by
// 1/(1−rate); false is the deterministic identity pass.
DropoutForwardResult dropout_forward(const DropoutLayer& layer,
                                     const Matrix2D& x, SeededRng& rng,
                                     bool sample);

Matrix2D dropout_backward(const DropoutLayer& layer, const Matrix2D& grad_out,
                          const Matrix2D& mask);

}  // namespace batchens
