#pragma once

#include <cstddef>
#include <vector>

#include "batchens/matrix.hpp"
#include "batchens/model.hpp"
#include "batchens/rng.hpp"

namespace batchens {

struct PredictionBundle {
  Matrix2D mean_probs;                 // B×C, arithmetic mean of member_probs
  std::vector<Matrix2D> member_probs;  // M entries, each B×C
  std::vector<std::vector<std::size_t>> member_labels;
  std::vector<std::size_t> mean_labels;
};

// Tiles X M times (blockwise: [member 0 | member 1 | …]), runs one vectorized
// forward pass, softmaxes per row, de-tiles into member probabilities and
// averages them. Deterministic; dropout layers run as identity.
PredictionBundle ensemble_predict(const Model& model, const Matrix2D& x,
                                  std::size_t head = 0);

// Softmax output using member i's fast weights for every ensemble layer.
Matrix2D member_predict(const Model& model, const Matrix2D& x, std::size_t i,
                        std::size_t head = 0);

// Mean of `samples` stochastic softmax passes with freshly drawn dropout
// masks. The model must contain a dropout layer; samples ≥ 1.
Matrix2D mc_dropout_predict(const Model& model, const Matrix2D& x,
                            std::size_t samples, SeededRng& rng,
                            std::size_t head = 0);

// As above but keeps each pass: row i of the result list is pass i's
// probabilities (pass 0 serves as the base model in diversity profiles).
std::vector<Matrix2D> mc_dropout_samples(const Model& model, const Matrix2D& x,
                                         std::size_t samples, SeededRng& rng,
                                         std::size_t head = 0);

// Fraction of rows whose argmax equals the label.
double accuracy(const Matrix2D& probs, const std::vector<std::size_t>& labels);

}  // namespace batchens
