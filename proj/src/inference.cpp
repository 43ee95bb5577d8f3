#include "batchens/inference.hpp"

#include <algorithm>
#include <string>

#include "batchens/error.hpp"

namespace batchens {

PredictionBundle ensemble_predict(const Model& model, const Matrix2D& x,
                                  std::size_t head) {
  const std::size_t members = model.members();
  const std::size_t batch = x.rows();
  const std::size_t dim = x.cols();

  Matrix2D tiled(batch * members, dim);
  std::vector<std::size_t> assign(batch * members);
  for (std::size_t j = 0; j < members; ++j) {
    for (std::size_t b = 0; b < batch; ++b) {
      const double* from = x.row(b);
      double* to = tiled.row(j * batch + b);
      std::copy(from, from + dim, to);
      assign[j * batch + b] = j;
    }
  }

  ForwardMode mode;
  mode.assign = &assign;
  mode.head = head;
  Matrix2D logits = model_forward(model, tiled, mode).logits;
  Matrix2D probs = softmax_rows(logits);
  const std::size_t classes = probs.cols();

  PredictionBundle bundle;
  bundle.member_probs.reserve(members);
  bundle.mean_probs = Matrix2D(batch, classes, 0.0);
  for (std::size_t j = 0; j < members; ++j) {
    Matrix2D block(batch, classes);
    for (std::size_t b = 0; b < batch; ++b) {
      const double* from = probs.row(j * batch + b);
      std::copy(from, from + classes, block.row(b));
    }
    add_scaled_in_place(bundle.mean_probs, block, 1.0);
    bundle.member_labels.push_back(argmax_rows(block));
    bundle.member_probs.push_back(std::move(block));
  }
  scale_in_place(bundle.mean_probs, 1.0 / static_cast<double>(members));
  bundle.mean_labels = argmax_rows(bundle.mean_probs);
  return bundle;
}

Matrix2D member_predict(const Model& model, const Matrix2D& x, std::size_t i,
                        std::size_t head) {
  if (i >= model.members()) {
    throw IndexError("member index " + std::to_string(i) + " out of range [0," +
                     std::to_string(model.members()) + ")");
  }
  std::vector<std::size_t> assign(x.rows(), i);
  ForwardMode mode;
  mode.assign = &assign;
  mode.head = head;
  return softmax_rows(model_forward(model, x, mode).logits);
}

std::vector<Matrix2D> mc_dropout_samples(const Model& model, const Matrix2D& x,
                                         std::size_t samples, SeededRng& rng,
                                         std::size_t head) {
  if (samples == 0) throw ArgumentError("dropout sampling needs at least 1 pass");
  if (!model.has_dropout_layers()) {
    throw ArgumentError("dropout sampling requires a model with dropout layers");
  }
  std::vector<std::size_t> assign;
  ForwardMode mode;
  if (model.has_ensemble_layers()) {
    assign.assign(x.rows(), 0);
    mode.assign = &assign;
  }
  mode.sample_dropout = true;
  mode.dropout_rng = &rng;
  mode.head = head;

  std::vector<Matrix2D> out;
  out.reserve(samples);
  for (std::size_t k = 0; k < samples; ++k) {
    out.push_back(softmax_rows(model_forward(model, x, mode).logits));
  }
  return out;
}

Matrix2D mc_dropout_predict(const Model& model, const Matrix2D& x,
                            std::size_t samples, SeededRng& rng,
                            std::size_t head) {
  std::vector<Matrix2D> passes = mc_dropout_samples(model, x, samples, rng, head);
  Matrix2D mean(passes.front().rows(), passes.front().cols(), 0.0);
  for (const Matrix2D& p : passes) add_scaled_in_place(mean, p, 1.0);
  scale_in_place(mean, 1.0 / static_cast<double>(samples));
  return mean;
}

double accuracy(const Matrix2D& probs, const std::vector<std::size_t>& labels) {
  if (probs.rows() != labels.size()) {
    throw ShapeError("accuracy: " + std::to_string(probs.rows()) +
                     " prediction rows vs " + std::to_string(labels.size()) +
                     " labels");
  }
  if (labels.empty()) throw ArgumentError("accuracy of an empty set is undefined");
  const std::vector<std::size_t> pred = argmax_rows(probs);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (pred[i] == labels[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

}  // namespace batchens
