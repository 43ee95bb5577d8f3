#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "batchens/matrix.hpp"

namespace batchens {

struct Dataset {
  Matrix2D features;  // N×m
  std::vector<std::size_t> labels;
  std::size_t classes = 0;
  std::string name;

  std::size_t size() const { return labels.size(); }
  std::size_t dim() const { return features.cols(); }
};

// N ≥ 1, labels in [0, classes), feature rows = label count, all finite.
void validate_dataset(const Dataset& data);

// Rows of `data` at `indices`, in the given order (labels follow).
Dataset take_rows(const Dataset& data, const std::vector<std::size_t>& indices);

// ---- synthetic blobs ---------------------------------------------------------

// Class c is an isotropic Gaussian (std `spread`) around a seeded random
// center with N(0,1) coordinates. Rows ordered class-major. Deterministic.
Dataset gen_blobs(std::size_t classes, std::size_t per_class, std::size_t dim,
                  double spread, std::uint64_t seed);

struct BlobsPair {
  Dataset train;
  Dataset test;
};

// Train and test sets drawn around the same centers from disjoint noise
// streams. `pair.train` is bit-identical to gen_blobs with the same seed.
BlobsPair gen_blobs_pair(std::size_t classes, std::size_t train_per_class,
                         std::size_t test_per_class, std::size_t dim,
                         double spread, std::uint64_t seed);

// ---- IDX ingestion -----------------------------------------------------------

// MNIST-style archives: big-endian magic 2051 (images: count, rows, cols,
// raw bytes) and 2049 (labels: count, raw bytes). Pixels scaled to [0,1] by
// division by 255. Bad magic, count mismatch, or truncation → FormatError.
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

// ---- task splitting ----------------------------------------------------------

struct Task {
  Dataset train;
  Dataset test;
  std::vector<std::size_t> class_ids;  // original class ids, in within-task label order
  std::size_t head_id = 0;
};

using TaskSequence = std::vector<Task>;

// Seeded random permutation of the classes partitioned into T blocks of C/T;
// within-task labels re-indexed to [0, C/T). Both sets split identically.
// C not divisible by T, or C/T < 2, → ConfigError.
TaskSequence split_tasks(const Dataset& train, const Dataset& test,
                         std::size_t tasks, std::uint64_t seed);

// ---- transformations ---------------------------------------------------------

// Per-class stratified seeded sample of ⌈fraction·count⌉ examples, original
// row order preserved.
Dataset subsample(const Dataset& data, double fraction, std::uint64_t seed);

// Additive Gaussian noise with σ = 0.05·level, clipped back to [0,1].
// Requires features already in [0,1]; level outside 1..5 → ArgumentError.
Dataset corrupt(const Dataset& data, int level, std::uint64_t seed);

// Per-feature min-max scaling fitted on one set (typically train) and applied
// to any set, clipping to [0,1] — establishes the precondition of corrupt().
struct Normalizer {
  std::vector<double> lo;
  std::vector<double> hi;
};

Normalizer fit_normalizer(const Dataset& data);
Dataset apply_normalizer(const Normalizer& norm, const Dataset& data);

// Debug export: one row per example, label last column.
void export_csv(const Dataset& data, const std::string& path);

}  // namespace batchens
