#include "batchens/model.hpp"

#include <string>

#include "batchens/error.hpp"

namespace batchens {

namespace {

// Input dimension of a trunk layer, or 0 for shape-preserving layers.
std::size_t layer_in_dim(const Layer& layer) {
  if (const auto* be = std::get_if<BatchEnsembleLayer>(&layer)) return be->in_dim();
  if (const auto* de = std::get_if<DenseLayer>(&layer)) return de->in_dim();
  return 0;
}

std::size_t layer_out_dim(const Layer& layer) {
  if (const auto* be = std::get_if<BatchEnsembleLayer>(&layer)) return be->out_dim();
  if (const auto* de = std::get_if<DenseLayer>(&layer)) return de->out_dim();
  return 0;
}

}  // namespace

std::size_t Model::in_dim() const {
  for (const Layer& layer : trunk) {
    const std::size_t d = layer_in_dim(layer);
    if (d != 0) return d;
  }
  return heads.empty() ? 0 : heads.front().in_dim();
}

std::size_t Model::members() const {
  for (const Layer& layer : trunk) {
    if (const auto* be = std::get_if<BatchEnsembleLayer>(&layer)) {
      return be->members();
    }
  }
  return 1;
}

bool Model::has_ensemble_layers() const {
  for (const Layer& layer : trunk) {
    if (std::holds_alternative<BatchEnsembleLayer>(layer)) return true;
  }
  return false;
}

bool Model::has_dropout_layers() const {
  for (const Layer& layer : trunk) {
    if (std::holds_alternative<DropoutLayer>(layer)) return true;
  }
  return false;
}

std::size_t Model::trunk_param_count() const {
  std::size_t count = 0;
  for (const Layer& layer : trunk) {
    if (const auto* be = std::get_if<BatchEnsembleLayer>(&layer)) {
      count += be->param_count();
    } else if (const auto* de = std::get_if<DenseLayer>(&layer)) {
      count += de->param_count();
    }
  }
  return count;
}

std::size_t Model::head_param_count() const {
  std::size_t count = 0;
  for (const DenseLayer& head : heads) count += head.param_count();
  return count;
}

void validate_model(const Model& model) {
  if (model.heads.empty()) {
    throw ArgumentError("model needs at least one output head");
  }
  std::size_t dim = 0;  // 0 = not yet pinned by a dimensioned layer
  std::size_t members = 0;
  for (std::size_t i = 0; i < model.trunk.size(); ++i) {
    const Layer& layer = model.trunk[i];
    if (std::holds_alternative<DropoutLayer>(layer)) {
      if (dim == 0) {
        throw ArgumentError("dropout cannot be the first trunk layer");
      }
      continue;
    }
    const std::size_t in = layer_in_dim(layer);
    if (dim != 0 && in != dim) {
      throw ShapeError("trunk layer " + std::to_string(i) + " expects input " +
                       std::to_string(in) + " but receives " +
                       std::to_string(dim));
    }
    dim = layer_out_dim(layer);
    if (const auto* be = std::get_if<BatchEnsembleLayer>(&layer)) {
      if (members != 0 && be->members() != members) {
        throw ArgumentError("ensemble layers disagree on ensemble size: " +
                            std::to_string(members) + " vs " +
                            std::to_string(be->members()));
      }
      members = be->members();
    }
  }
  for (std::size_t h = 0; h < model.heads.size(); ++h) {
    const std::size_t expect = dim != 0 ? dim : model.heads[h].in_dim();
    if (model.heads[h].in_dim() != expect) {
      throw ShapeError("head " + std::to_string(h) + " expects input " +
                       std::to_string(model.heads[h].in_dim()) +
                       " but the trunk produces " + std::to_string(expect));
    }
  }
}

Model build_model(const ModelSpec& spec, SeededRng& rng) {
  if (spec.in_dim == 0) throw ArgumentError("model input dimension must be positive");
  if (spec.classes < 2) throw ArgumentError("model needs at least 2 classes");
  if (spec.heads == 0) throw ArgumentError("model needs at least one output head");
  if (spec.dropout_rate < 0.0 || spec.dropout_rate >= 1.0) {
    throw ArgumentError("dropout rate must lie in [0,1)");
  }

  // Each layer draws from its own sub-stream (trunk position i → tag 2i,
  // head h → tag 2h+1) so a dense trunk and an ensemble trunk of the same
  // shape share identical weight draws layer for layer.
  Model model;
  std::size_t dim = spec.in_dim;
  std::size_t pos = 0;
  for (std::size_t width : spec.hidden) {
    if (width == 0) throw ArgumentError("hidden widths must be positive");
    SeededRng layer_rng = rng.split(2 * pos++);
    if (spec.members > 0) {
      BatchEnsembleLayer layer(dim, width, spec.members, Activation::kRelu);
      init_batch_ensemble(layer, layer_rng, spec.fast_init);
      model.trunk.emplace_back(std::move(layer));
    } else {
      DenseLayer layer(dim, width, Activation::kRelu);
      init_dense(layer, layer_rng);
      model.trunk.emplace_back(std::move(layer));
    }
    if (spec.dropout_rate > 0.0) {
      model.trunk.emplace_back(DropoutLayer(spec.dropout_rate));
    }
    dim = width;
  }
  for (std::size_t h = 0; h < spec.heads; ++h) {
    SeededRng head_rng = rng.split(2 * h + 1);
    DenseLayer head(dim, spec.classes, Activation::kIdentity);
    init_dense(head, head_rng);
    model.heads.push_back(std::move(head));
  }
  validate_model(model);
  return model;
}

ModelForwardResult model_forward(const Model& model, const Matrix2D& x,
                                 const ForwardMode& mode) {
  if (model.has_ensemble_layers() && mode.assign == nullptr) {
    throw ArgumentError("model has ensemble layers: a member assignment is required");
  }
  if (mode.sample_dropout && model.has_dropout_layers() &&
      mode.dropout_rng == nullptr) {
    throw ArgumentError("dropout sampling requires an RNG");
  }
  if (mode.head >= model.heads.size()) {
    throw IndexError("head " + std::to_string(mode.head) + " out of range [0," +
                     std::to_string(model.heads.size()) + ")");
  }

  ModelForwardResult out;
  out.cache.head_id = mode.head;
  out.cache.trunk.reserve(model.trunk.size());

  SeededRng unused(0);
  Matrix2D cur = x;
  for (const Layer& layer : model.trunk) {
    if (const auto* be = std::get_if<BatchEnsembleLayer>(&layer)) {
      BeForwardResult r = be_forward(*be, cur, *mode.assign);
      cur = std::move(r.y);
      out.cache.trunk.emplace_back(std::move(r.cache));
    } else if (const auto* de = std::get_if<DenseLayer>(&layer)) {
      DenseForwardResult r = dense_forward(*de, cur);
      cur = std::move(r.y);
      out.cache.trunk.emplace_back(std::move(r.cache));
    } else {
      const auto& dl = std::get<DropoutLayer>(layer);
      SeededRng& rng = mode.dropout_rng ? *mode.dropout_rng : unused;
      DropoutForwardResult r = dropout_forward(dl, cur, rng, mode.sample_dropout);
      cur = std::move(r.y);
      out.cache.trunk.emplace_back(DropoutCache{std::move(r.mask)});
    }
  }

  DenseForwardResult head = dense_forward(model.heads[mode.head], cur);
  out.logits = std::move(head.y);
  out.cache.head = std::move(head.cache);
  return out;
}

ModelGradients model_backward(const Model& model, const Matrix2D& grad_logits,
                              const ModelCache& cache) {
  if (cache.trunk.size() != model.trunk.size()) {
    throw StateError("model_backward: cache does not match this model");
  }
  if (cache.head_id >= model.heads.size()) {
    throw StateError("model_backward: cache head id out of range");
  }

  ModelGradients grads;
  grads.head_id = cache.head_id;
  grads.heads.reserve(model.heads.size());
  for (const DenseLayer& head : model.heads) {
    DenseGradients zero;
    zero.weight = Matrix2D(head.weight.rows(), head.weight.cols(), 0.0);
    zero.bias = Matrix2D(1, head.out_dim(), 0.0);
    grads.heads.push_back(std::move(zero));
  }

  const DenseLayer& head = model.heads[cache.head_id];
  Matrix2D grad_pre =
      activation_backward(head.act, cache.head.a, grad_logits);
  DenseGradients head_grads = dense_backward(head, grad_pre, cache.head);
  Matrix2D g = std::move(head_grads.x);
  grads.heads[cache.head_id] = std::move(head_grads);

  grads.trunk.resize(model.trunk.size());
  for (std::size_t i = model.trunk.size(); i-- > 0;) {
    const Layer& layer = model.trunk[i];
    if (const auto* be = std::get_if<BatchEnsembleLayer>(&layer)) {
      const auto& lc = std::get<BeForwardCache>(cache.trunk[i]);
      Matrix2D gp = activation_backward(be->act, lc.a, g);
      BeGradients bg = be_backward(*be, gp, lc);
      g = std::move(bg.x);
      grads.trunk[i] = std::move(bg);
    } else if (const auto* de = std::get_if<DenseLayer>(&layer)) {
      const auto& lc = std::get<DenseForwardCache>(cache.trunk[i]);
      Matrix2D gp = activation_backward(de->act, lc.a, g);
      DenseGradients dg = dense_backward(*de, gp, lc);
      g = std::move(dg.x);
      grads.trunk[i] = std::move(dg);
    } else {
      const auto& dl = std::get<DropoutLayer>(layer);
      const auto& lc = std::get<DropoutCache>(cache.trunk[i]);
      g = dropout_backward(dl, g, lc.mask);
      grads.trunk[i] = std::monostate{};
    }
  }
  return grads;
}

std::vector<ParamRef> trainable_params(Model& model) {
  std::vector<ParamRef> refs;
  for (Layer& layer : model.trunk) {
    if (auto* be = std::get_if<BatchEnsembleLayer>(&layer)) {
      refs.push_back({&be->slow, ParamKind::kSlowWeight, -1});
      refs.push_back({&be->fast_r, ParamKind::kFastR, -1});
      refs.push_back({&be->fast_s, ParamKind::kFastS, -1});
      refs.push_back({&be->bias, ParamKind::kBias, -1});
    } else if (auto* de = std::get_if<DenseLayer>(&layer)) {
      refs.push_back({&de->weight, ParamKind::kSlowWeight, -1});
      refs.push_back({&de->bias, ParamKind::kBias, -1});
    }
  }
  for (std::size_t h = 0; h < model.heads.size(); ++h) {
    refs.push_back({&model.heads[h].weight, ParamKind::kHeadWeight, static_cast<int>(h)});
    refs.push_back({&model.heads[h].bias, ParamKind::kHeadBias, static_cast<int>(h)});
  }
  return refs;
}

std::vector<GradRef> gradient_tensors(const Model& model, ModelGradients& grads) {
  if (grads.trunk.size() != model.trunk.size() ||
      grads.heads.size() != model.heads.size()) {
    throw StateError("gradient_tensors: gradients do not match this model");
  }
  std::vector<GradRef> refs;
  for (std::size_t i = 0; i < model.trunk.size(); ++i) {
    if (std::holds_alternative<BatchEnsembleLayer>(model.trunk[i])) {
      auto* bg = std::get_if<BeGradients>(&grads.trunk[i]);
      if (bg == nullptr) throw StateError("gradient_tensors: gradients do not match this model");
      refs.push_back({&bg->slow, ParamKind::kSlowWeight, -1});
      refs.push_back({&bg->fast_r, ParamKind::kFastR, -1});
      refs.push_back({&bg->fast_s, ParamKind::kFastS, -1});
      refs.push_back({&bg->bias, ParamKind::kBias, -1});
    } else if (std::holds_alternative<DenseLayer>(model.trunk[i])) {
      auto* dg = std::get_if<DenseGradients>(&grads.trunk[i]);
      if (dg == nullptr) throw StateError("gradient_tensors: gradients do not match this model");
      refs.push_back({&dg->weight, ParamKind::kSlowWeight, -1});
      refs.push_back({&dg->bias, ParamKind::kBias, -1});
    }
  }
  for (std::size_t h = 0; h < model.heads.size(); ++h) {
    refs.push_back({&grads.heads[h].weight, ParamKind::kHeadWeight, static_cast<int>(h)});
    refs.push_back({&grads.heads[h].bias, ParamKind::kHeadBias, static_cast<int>(h)});
  }
  return refs;
}

}  // namespace batchens
