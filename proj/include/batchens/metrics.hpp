#pragma once

#include <cstddef>
#include <vector>

#include "batchens/inference.hpp"
#include "batchens/matrix.hpp"

namespace batchens {

struct EceBin {
  std::size_t count = 0;
  double mean_confidence = 0.0;  // 0 for empty bins
  double mean_accuracy = 0.0;    // 0 for empty bins
};

struct EceBreakdown {
  std::size_t bins = 0;
  std::vector<EceBin> bin_stats;  // bins entries; bin m covers ((m)/bins, (m+1)/bins]
  double ece = 0.0;
};

// Expected calibration error. Confidence is the max probability per row; a
// sample with confidence c lands in bin m (1-based) iff c ∈ ((m−1)/bins, m/bins].
// ece = Σ (|B_m|/n)·|acc(B_m) − conf(B_m)| with empty bins contributing 0.
// Rows must lie on the simplex (entries ≥ 0, sum within 1e-6 of 1); violations,
// bins = 0, empty input, or an out-of-range label raise ArgumentError; a
// row/label count mismatch raises ShapeError.
EceBreakdown ece(const Matrix2D& probs, const std::vector<std::size_t>& labels,
                 std::size_t bins = 15);

// Per-row Shannon entropy −Σ p ln p in nats, with 0·ln 0 = 0. Same simplex
// validation as ece.
std::vector<double> predictive_entropy(const Matrix2D& probs);

// Fixed-width histogram of non-negative values starting at 0: value v lands
// in bin floor(v / bin_width). Returns counts up to the last occupied bin.
// bin_width ≤ 0 or a negative value raises ArgumentError.
std::vector<std::size_t> histogram(const std::vector<double>& values,
                                   double bin_width);

// Fraction of positions where the two label vectors differ (normalized
// Hamming distance). Mismatched lengths or empty vectors raise ArgumentError.
double disagreement(const std::vector<std::size_t>& pred_a,
                    const std::vector<std::size_t>& pred_b);

struct DiversityPoint {
  double accuracy = 0.0;      // member's own test accuracy
  double disagreement = 0.0;  // vs. member 0 (the base)
  double normalized = 0.0;    // disagreement / (1 − base accuracy)
  // When the base scores 100% the normalizer vanishes; `normalized` then
  // carries the raw disagreement and this flag is set.
  bool normalization_guarded = false;
};

// One point per member; member 0 is the base and scores disagreement 0
// against itself. Needs ≥ 2 members (ArgumentError otherwise); every label
// vector must match the length of `labels` (ShapeError otherwise).
std::vector<DiversityPoint> diversity_profile(
    const std::vector<std::vector<std::size_t>>& member_predictions,
    const std::vector<std::size_t>& labels);

// Convenience adapters for the two prediction sources.
std::vector<DiversityPoint> diversity_profile(
    const PredictionBundle& bundle, const std::vector<std::size_t>& labels);
std::vector<DiversityPoint> diversity_profile(
    const std::vector<Matrix2D>& sampled_probs,
    const std::vector<std::size_t>& labels);

}  // namespace batchens
