#pragma once

#include <cstddef>
#include <variant>
#include <vector>

#include "batchens/layers.hpp"
#include "batchens/matrix.hpp"
#include "batchens/rng.hpp"

namespace batchens {

using Layer = std::variant<BatchEnsembleLayer, DenseLayer, DropoutLayer>;

// Feedforward classifier: a trunk of hidden layers followed by one of
// possibly several output heads (plain dense, identity activation, one head
// active per forward pass). Multiple heads exist only for the sequential-task
// setting; ordinary models have exactly one.
struct Model {
  std::vector<Layer> trunk;
  std::vector<DenseLayer> heads;

  std::size_t in_dim() const;
  // Ensemble size: shared by every ensemble layer in the trunk; 1 if none.
  std::size_t members() const;
  bool has_ensemble_layers() const;
  bool has_dropout_layers() const;

  std::size_t trunk_param_count() const;
  std::size_t head_param_count() const;  // all heads
  std::size_t param_count() const { return trunk_param_count() + head_param_count(); }
};

// Throws if adjacent dimensions are incompatible, ensemble sizes differ
// across layers, a head's input does not match the trunk output, or there is
// no head.
void validate_model(const Model& model);

// ---- model construction ----------------------------------------------------

// Hidden widths h1..hk produce trunk layers in_dim→h1→...→hk (ReLU) and heads
// hk→classes (identity). `members` > 0 builds ensemble layers, 0 builds plain
// dense layers. `dropout_rate` > 0 inserts a dropout layer after every hidden
// activation.
struct ModelSpec {
  std::size_t in_dim = 0;
  std::vector<std::size_t> hidden;
  std::size_t classes = 0;
  std::size_t members = 0;       // 0 → dense trunk
  double dropout_rate = 0.0;
  std::size_t heads = 1;
  FastInit fast_init = FastInit::kRandomSign;
};

// Parameters drawn from rng in declaration order (trunk first, then heads).
Model build_model(const ModelSpec& spec, SeededRng& rng);

// ---- forward / backward ----------------------------------------------------

struct ForwardMode {
  // Per-row member assignment; required iff the model has ensemble layers.
  const std::vector<std::size_t>* assign = nullptr;
  // Draw fresh dropout masks (training / MC sampling). Off = identity pass.
  bool sample_dropout = false;
  SeededRng* dropout_rng = nullptr;
  std::size_t head = 0;
};

struct DropoutCache {
  Matrix2D mask;
};

using LayerCache = std::variant<BeForwardCache, DenseForwardCache, DropoutCache>;

struct ModelCache {
  std::vector<LayerCache> trunk;  // parallel to model.trunk
  DenseForwardCache head;
  std::size_t head_id = 0;
};

struct ModelForwardResult {
  Matrix2D logits;
  ModelCache cache;
};

ModelForwardResult model_forward(const Model& model, const Matrix2D& x,
                                 const ForwardMode& mode);

using LayerGradients = std::variant<BeGradients, DenseGradients, std::monostate>;

struct ModelGradients {
  std::vector<LayerGradients> trunk;  // parallel to model.trunk
  std::vector<DenseGradients> heads;  // parallel to model.heads; inactive heads zero
  std::size_t head_id = 0;
};

// grad_logits is dL/dlogits through head `cache.head_id`. Heads the pass did
// not use get zero gradients of matching shape, so the result always pairs
// 1:1 with trainable_params.
ModelGradients model_backward(const Model& model, const Matrix2D& grad_logits,
                              const ModelCache& cache);

// ---- parameter traversal ----------------------------------------------------

// What a trainable tensor is, for scoped updates and weight decay.
enum class ParamKind {
  kSlowWeight,   // ensemble shared weight or dense trunk weight
  kFastR,        // per-member input-side modulation (rows = members)
  kFastS,        // per-member output-side modulation
  kBias,         // trunk bias (rows = members for ensemble layers)
  kHeadWeight,
  kHeadBias,
};

struct ParamRef {
  Matrix2D* tensor;
  ParamKind kind;
  // Head index for head tensors, otherwise -1.
  int head_id;
};

struct GradRef {
  Matrix2D* tensor;
  ParamKind kind;
  int head_id;
};

// Fixed traversal order (trunk layers in order, then heads in id order); the
// checkpoint format and the optimizer both rely on it.
std::vector<ParamRef> trainable_params(Model& model);
// Same order and length as trainable_params for a gradients object produced
// by model_backward on this model.
std::vector<GradRef> gradient_tensors(const Model& model, ModelGradients& grads);

}  // namespace batchens
