#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "batchens/data.hpp"
#include "batchens/matrix.hpp"
#include "batchens/model.hpp"

namespace batchens {

enum class DecayMode {
  kSharedOnly,  // λ·W on slow/dense/head weights only; fast weights and biases untouched
  kMeanWeight,  // gradient of (λ/2)‖W ∘ ((1/M) Σ_i r_i s_iᵀ)‖², reaching W, r_i, s_i
};

// Which tensors an optimizer step may change. Out-of-scope gradients are
// zeroed before the step, so frozen parameters stay bit-identical (their
// velocity never leaves zero).
struct UpdateScope {
  bool slow = true;       // ensemble shared weights and dense trunk weights
  bool fast = true;       // per-member modulation vectors
  bool bias = true;       // trunk biases
  int only_member = -1;   // ≥0: restrict fast/bias updates to this member's rows
  int only_head = -1;     // ≥0: freeze every other head
};

struct TrainConfig {
  std::size_t batch_size = 64;
  std::size_t epochs = 10;
  double base_lr = 0.1;
  std::vector<double> lr_milestones{0.5, 0.75};  // fractions of training
  double lr_factor = 0.1;
  double weight_decay = 1e-4;
  DecayMode decay_mode = DecayMode::kSharedOnly;
  double momentum = 0.9;
  std::uint64_t seed = 0;
  // Budget multiplier for methods trained longer than the single-model
  // baseline; consulted by experiment runners, not by train() itself.
  double extra_iteration_factor = 1.5;
  UpdateScope scope;
  // Shuffling normally derives from `seed`; overriding it exercises the
  // guarantee that shuffle and init draws come from disjoint sub-streams.
  std::optional<std::uint64_t> shuffle_seed;
  std::size_t head = 0;
  // Route every row to this one member instead of sub-batching (sequential
  // task training). Waives the batch/ensemble divisibility requirement;
  // epoch accuracies then evaluate that member alone.
  std::optional<std::size_t> pin_member;
};

// Throws ConfigError on invalid hyperparameters (non-positive batch or lr,
// milestones not strictly increasing inside (0,1), momentum outside [0,1),
// negative decay) and on batch size not divisible by the ensemble size.
void validate_train_config(const TrainConfig& config, const Model& model);

// Contiguous blocks of batch/members rows, block j → member j.
// batch % members ≠ 0 → ConfigError suggesting a batch-size change.
std::vector<std::size_t> assign_subbatches(std::size_t batch, std::size_t members);

struct XentResult {
  double loss;    // mean over rows of −log softmax(logits)[label]
  Matrix2D grad;  // (softmax − onehot) / batch
};

XentResult softmax_xent(const Matrix2D& logits,
                        const std::vector<std::size_t>& labels);

// Adds the weight-decay contribution to existing gradients. Decay reaches
// trunk weights and the head the pass used (grads.head_id); biases and — in
// shared-only mode — fast weights get nothing.
void add_decay_gradients(const Model& model, ModelGradients& grads,
                         DecayMode mode, double lambda);

// Zeroes every gradient the scope excludes.
void apply_scope(const Model& model, ModelGradients& grads,
                 const UpdateScope& scope);

// velocity ← momentum·velocity + grad;  param ← param − lr·velocity.
void sgd_step(Matrix2D& param, Matrix2D& velocity, const Matrix2D& grad,
              double lr, double momentum);

// Momentum buffers in trainable_params order. The model's layer structure
// must not change between steps (parameter values may).
class SgdMomentum {
 public:
  SgdMomentum(Model& model, double momentum);

  void step(Model& model, ModelGradients& grads, double lr);
  // Zero all velocities (fresh optimizer state, e.g. between tasks).
  void reset();
  double momentum() const { return momentum_; }

 private:
  double momentum_;
  std::vector<Matrix2D> velocities_;
};

// Piecewise-constant schedule: base_lr · factor^(#milestones with
// step/total_steps ≥ milestone). The drop happens exactly at the milestone
// step.
double lr_at(std::size_t step, std::size_t total_steps, const TrainConfig& config);

struct EpochStats {
  std::size_t epoch;
  double mean_loss;
  double train_accuracy;
  double eval_accuracy;  // NaN when no eval set was given
};

struct TrainResult {
  std::vector<EpochStats> history;
};

// Seeded mini-batch SGD with momentum. Epochs are shuffled; each batch is
// split into contiguous member sub-batches; remainder rows that do not fill
// a batch are skipped that epoch (they rotate back in via the shuffle).
// Fully deterministic given the config. Non-finite loss → TrainingError
// naming the epoch and step.
TrainResult train(Model& model, const Dataset& data, const TrainConfig& config,
                  const Dataset* eval_set = nullptr);

}  // namespace batchens
