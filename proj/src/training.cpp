#include "batchens/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "batchens/error.hpp"
#include "batchens/inference.hpp"
#include "batchens/rng.hpp"

namespace batchens {

void validate_train_config(const TrainConfig& config, const Model& model) {
  if (config.batch_size == 0) throw ConfigError("batch_size must be positive");
  if (config.base_lr <= 0.0) throw ConfigError("base_lr must be positive");
  if (config.lr_factor <= 0.0) throw ConfigError("lr_factor must be positive");
  if (config.weight_decay < 0.0) throw ConfigError("weight_decay must be non-negative");
  if (config.momentum < 0.0 || config.momentum >= 1.0) {
    throw ConfigError("momentum must lie in [0,1)");
  }
  if (config.extra_iteration_factor < 1.0) {
    throw ConfigError("extra_iteration_factor must be at least 1");
  }
  double prev = 0.0;
  for (double m : config.lr_milestones) {
    if (m <= prev || m >= 1.0) {
      throw ConfigError("lr_milestones must be strictly increasing inside (0,1)");
    }
    prev = m;
  }
  if (config.head >= model.heads.size()) {
    throw ConfigError("head " + std::to_string(config.head) +
                      " out of range: model has " +
                      std::to_string(model.heads.size()) + " heads");
  }
  if (config.pin_member) {
    if (*config.pin_member >= model.members()) {
      throw ConfigError("pin_member " + std::to_string(*config.pin_member) +
                        " out of range: ensemble size is " +
                        std::to_string(model.members()));
    }
  } else if (model.has_ensemble_layers() &&
             config.batch_size % model.members() != 0) {
    throw ConfigError("batch_size " + std::to_string(config.batch_size) +
                      " is not divisible by ensemble size " +
                      std::to_string(model.members()) +
                      "; adjust batch_size");
  }
}

std::vector<std::size_t> assign_subbatches(std::size_t batch, std::size_t members) {
  if (members == 0) throw ArgumentError("ensemble size must be at least 1");
  if (batch % members != 0) {
    throw ConfigError("batch size " + std::to_string(batch) +
                      " is not divisible by ensemble size " +
                      std::to_string(members) + "; adjust batch size");
  }
  const std::size_t block = batch / members;
  std::vector<std::size_t> assign(batch);
  for (std::size_t b = 0; b < batch; ++b) assign[b] = b / block;
  return assign;
}

XentResult softmax_xent(const Matrix2D& logits,
                        const std::vector<std::size_t>& labels) {
  const std::size_t batch = logits.rows();
  const std::size_t classes = logits.cols();
  if (labels.size() != batch) {
    throw ShapeError("softmax_xent: " + std::to_string(batch) +
                     " logit rows vs " + std::to_string(labels.size()) +
                     " labels");
  }
  if (batch == 0) throw ArgumentError("softmax_xent on an empty batch");
  for (std::size_t b = 0; b < batch; ++b) {
    if (labels[b] >= classes) {
      throw ArgumentError("label " + std::to_string(labels[b]) + " at row " +
                          std::to_string(b) + " out of range [0," +
                          std::to_string(classes) + ")");
    }
  }

  XentResult out;
  out.grad = softmax_rows(logits);

  double loss = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    const double* z = logits.row(b);
    double zmax = z[0];
    for (std::size_t c = 1; c < classes; ++c) zmax = std::max(zmax, z[c]);
    double sum = 0.0;
    for (std::size_t c = 0; c < classes; ++c) sum += std::exp(z[c] - zmax);
    loss += std::log(sum) - (z[labels[b]] - zmax);
  }
  out.loss = loss / static_cast<double>(batch);

  const double inv_batch = 1.0 / static_cast<double>(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    double* g = out.grad.row(b);
    g[labels[b]] -= 1.0;
    for (std::size_t c = 0; c < classes; ++c) g[c] *= inv_batch;
  }
  return out;
}

void add_decay_gradients(const Model& model, ModelGradients& grads,
                         DecayMode mode, double lambda) {
  if (lambda == 0.0) return;
  if (grads.trunk.size() != model.trunk.size() ||
      grads.heads.size() != model.heads.size()) {
    throw StateError("add_decay_gradients: gradients do not match this model");
  }

  for (std::size_t i = 0; i < model.trunk.size(); ++i) {
    if (const auto* be = std::get_if<BatchEnsembleLayer>(&model.trunk[i])) {
      auto* bgp = std::get_if<BeGradients>(&grads.trunk[i]);
      if (bgp == nullptr) throw StateError("add_decay_gradients: gradients do not match this model");
      auto& bg = *bgp;
      if (mode == DecayMode::kSharedOnly) {
        add_scaled_in_place(bg.slow, be->slow, lambda);
        continue;
      }
      // Penalty (λ/2)‖W∘P‖² with P = (1/M) Σ_i r_i s_iᵀ = (1/M) Rᵀ S:
      //   dW  += λ·W∘P∘P
      //   dr_i += (λ/M)·(W∘W∘P) s_i          (rows of S · (W∘W∘P)ᵀ)
      //   ds_i += (λ/M)·(W∘W∘P)ᵀ r_i         (rows of R · (W∘W∘P))
      const double members = static_cast<double>(be->members());
      Matrix2D p = matmul_transpose_a(be->fast_r, be->fast_s);
      scale_in_place(p, 1.0 / members);
      Matrix2D wp = hadamard(be->slow, p);
      add_scaled_in_place(bg.slow, hadamard(wp, p), lambda);
      Matrix2D wwp = hadamard(be->slow, wp);
      add_scaled_in_place(bg.fast_r, matmul_transpose_b(be->fast_s, wwp),
                          lambda / members);
      add_scaled_in_place(bg.fast_s, matmul(be->fast_r, wwp), lambda / members);
    } else if (const auto* de = std::get_if<DenseLayer>(&model.trunk[i])) {
      auto* dg = std::get_if<DenseGradients>(&grads.trunk[i]);
      if (dg == nullptr) throw StateError("add_decay_gradients: gradients do not match this model");
      add_scaled_in_place(dg->weight, de->weight, lambda);
    }
  }
  // Only the head the pass used: decaying idle heads would silently change
  // parameters no gradient flowed through.
  add_scaled_in_place(grads.heads[grads.head_id].weight,
                      model.heads[grads.head_id].weight, lambda);
}

namespace {

void zero_rows_except(Matrix2D& m, int keep) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    if (static_cast<int>(r) == keep) continue;
    double* row = m.row(r);
    for (std::size_t c = 0; c < m.cols(); ++c) row[c] = 0.0;
  }
}

}  // namespace

void apply_scope(const Model& model, ModelGradients& grads,
                 const UpdateScope& scope) {
  if (grads.trunk.size() != model.trunk.size() ||
      grads.heads.size() != model.heads.size()) {
    throw StateError("apply_scope: gradients do not match this model");
  }
  for (std::size_t i = 0; i < grads.trunk.size(); ++i) {
    if (auto* bg = std::get_if<BeGradients>(&grads.trunk[i])) {
      if (!scope.slow) bg->slow.fill(0.0);
      if (!scope.fast) {
        bg->fast_r.fill(0.0);
        bg->fast_s.fill(0.0);
      } else if (scope.only_member >= 0) {
        zero_rows_except(bg->fast_r, scope.only_member);
        zero_rows_except(bg->fast_s, scope.only_member);
      }
      if (!scope.bias) {
        bg->bias.fill(0.0);
      } else if (scope.only_member >= 0) {
        zero_rows_except(bg->bias, scope.only_member);
      }
    } else if (auto* dg = std::get_if<DenseGradients>(&grads.trunk[i])) {
      if (!scope.slow) dg->weight.fill(0.0);
      if (!scope.bias) dg->bias.fill(0.0);
    }
  }
  if (scope.only_head >= 0) {
    for (std::size_t h = 0; h < grads.heads.size(); ++h) {
      if (static_cast<int>(h) != scope.only_head) {
        grads.heads[h].weight.fill(0.0);
        grads.heads[h].bias.fill(0.0);
      }
    }
  }
}

void sgd_step(Matrix2D& param, Matrix2D& velocity, const Matrix2D& grad,
              double lr, double momentum) {
  if (!param.same_shape(velocity) || !param.same_shape(grad)) {
    throw ShapeError("sgd_step: parameter " + param.shape_str() +
                     ", velocity " + velocity.shape_str() + ", gradient " +
                     grad.shape_str() + " must share a shape");
  }
  double* p = param.data();
  double* v = velocity.data();
  const double* g = grad.data();
  for (std::size_t i = 0; i < param.size(); ++i) {
    v[i] = momentum * v[i] + g[i];
    p[i] -= lr * v[i];
  }
}

SgdMomentum::SgdMomentum(Model& model, double momentum) : momentum_(momentum) {
  if (momentum < 0.0 || momentum >= 1.0) {
    throw ArgumentError("momentum must lie in [0,1)");
  }
  for (const ParamRef& ref : trainable_params(model)) {
    velocities_.emplace_back(ref.tensor->rows(), ref.tensor->cols(), 0.0);
  }
}

void SgdMomentum::step(Model& model, ModelGradients& grads, double lr) {
  std::vector<ParamRef> params = trainable_params(model);
  std::vector<GradRef> gtens = gradient_tensors(model, grads);
  if (params.size() != velocities_.size() || gtens.size() != velocities_.size()) {
    throw StateError("optimizer state does not match this model");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    sgd_step(*params[i].tensor, velocities_[i], *gtens[i].tensor, lr, momentum_);
  }
}

void SgdMomentum::reset() {
  for (Matrix2D& v : velocities_) v.fill(0.0);
}

double lr_at(std::size_t step, std::size_t total_steps, const TrainConfig& config) {
  const double fraction =
      total_steps == 0
          ? 1.0
          : static_cast<double>(step) / static_cast<double>(total_steps);
  double lr = config.base_lr;
  for (double milestone : config.lr_milestones) {
    if (fraction >= milestone) lr *= config.lr_factor;
  }
  return lr;
}

TrainResult train(Model& model, const Dataset& data, const TrainConfig& config,
                  const Dataset* eval_set) {
  validate_model(model);
  validate_dataset(data);
  if (eval_set != nullptr) validate_dataset(eval_set[0]);
  validate_train_config(config, model);
  if (data.dim() != model.in_dim()) {
    throw ShapeError("dataset dimension " + std::to_string(data.dim()) +
                     " does not match model input " +
                     std::to_string(model.in_dim()));
  }
  if (data.classes != model.heads[config.head].out_dim()) {
    throw ShapeError("dataset has " + std::to_string(data.classes) +
                     " classes but head " + std::to_string(config.head) +
                     " outputs " +
                     std::to_string(model.heads[config.head].out_dim()));
  }

  const std::size_t batch = config.batch_size;
  const std::size_t steps_per_epoch = data.size() / batch;
  if (steps_per_epoch == 0) {
    throw ConfigError("batch_size " + std::to_string(batch) +
                      " exceeds dataset size " + std::to_string(data.size()));
  }
  const std::size_t total_steps = config.epochs * steps_per_epoch;

  SeededRng shuffle_rng =
      SeededRng(config.shuffle_seed.value_or(config.seed)).split(streams::kShuffle);
  SeededRng dropout_rng = SeededRng(config.seed).split(streams::kDropout);

  const std::vector<std::size_t> assign =
      config.pin_member ? std::vector<std::size_t>(batch, *config.pin_member)
                        : assign_subbatches(batch, model.members());
  const bool use_dropout = model.has_dropout_layers();

  ForwardMode mode;
  mode.assign = &assign;
  mode.sample_dropout = use_dropout;
  mode.dropout_rng = use_dropout ? &dropout_rng : nullptr;
  mode.head = config.head;

  SgdMomentum optimizer(model, config.momentum);

  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  Matrix2D bx(batch, data.dim());
  std::vector<std::size_t> by(batch);

  TrainResult result;
  std::size_t global_step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double loss_sum = 0.0;
    for (std::size_t s = 0; s < steps_per_epoch; ++s) {
      for (std::size_t b = 0; b < batch; ++b) {
        const std::size_t src = order[s * batch + b];
        const double* from = data.features.row(src);
        std::copy(from, from + data.dim(), bx.row(b));
        by[b] = data.labels[src];
      }

      ModelForwardResult fwd = model_forward(model, bx, mode);
      if (!fwd.logits.is_finite()) {
        throw TrainingError("loss diverged at epoch " + std::to_string(epoch) +
                            ", step " + std::to_string(s));
      }
      XentResult xent = softmax_xent(fwd.logits, by);
      if (!std::isfinite(xent.loss)) {
        throw TrainingError("loss diverged at epoch " + std::to_string(epoch) +
                            ", step " + std::to_string(s));
      }
      loss_sum += xent.loss;

      ModelGradients grads = model_backward(model, xent.grad, fwd.cache);
      add_decay_gradients(model, grads, config.decay_mode, config.weight_decay);
      apply_scope(model, grads, config.scope);
      optimizer.step(model, grads, lr_at(global_step, total_steps, config));
      ++global_step;
    }

    auto eval_accuracy = [&](const Dataset& set) {
      Matrix2D probs =
          config.pin_member
              ? member_predict(model, set.features, *config.pin_member, config.head)
              : ensemble_predict(model, set.features, config.head).mean_probs;
      return accuracy(probs, set.labels);
    };

    EpochStats stats;
    stats.epoch = epoch;
    stats.mean_loss = loss_sum / static_cast<double>(steps_per_epoch);
    stats.train_accuracy = eval_accuracy(data);
    stats.eval_accuracy = eval_set != nullptr
                              ? eval_accuracy(*eval_set)
                              : std::numeric_limits<double>::quiet_NaN();
    result.history.push_back(stats);
  }
  return result;
}

}  // namespace batchens
