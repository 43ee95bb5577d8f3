#include "batchens/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>

#include "batchens/csv.hpp"
#include "batchens/error.hpp"
#include "batchens/rng.hpp"

namespace batchens {

void validate_dataset(const Dataset& data) {
  if (data.size() == 0) throw ArgumentError("dataset '" + data.name + "' is empty");
  if (data.features.rows() != data.labels.size()) {
    throw ShapeError("dataset '" + data.name + "' has " +
                     std::to_string(data.features.rows()) +
                     " feature rows but " + std::to_string(data.labels.size()) +
                     " labels");
  }
  if (data.classes < 2) {
    throw ArgumentError("dataset '" + data.name + "' needs at least 2 classes");
  }
  for (std::size_t i = 0; i < data.labels.size(); ++i) {
    if (data.labels[i] >= data.classes) {
      throw ArgumentError("dataset '" + data.name + "' label " +
                          std::to_string(data.labels[i]) + " at row " +
                          std::to_string(i) + " out of range [0," +
                          std::to_string(data.classes) + ")");
    }
  }
  if (!data.features.is_finite()) {
    throw ArgumentError("dataset '" + data.name + "' has non-finite features");
  }
}

Dataset take_rows(const Dataset& data, const std::vector<std::size_t>& indices) {
  Dataset out;
  out.classes = data.classes;
  out.name = data.name;
  out.features = Matrix2D(indices.size(), data.dim());
  out.labels.resize(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const std::size_t src = indices[i];
    if (src >= data.size()) {
      throw IndexError("row index " + std::to_string(src) + " out of range [0," +
                       std::to_string(data.size()) + ")");
    }
    const double* from = data.features.row(src);
    double* to = out.features.row(i);
    std::copy(from, from + data.dim(), to);
    out.labels[i] = data.labels[src];
  }
  return out;
}

namespace {

Dataset blobs_from_centers(const Matrix2D& centers, std::size_t per_class,
                           double spread, SeededRng noise,
                           const std::string& name) {
  const std::size_t classes = centers.rows();
  const std::size_t dim = centers.cols();
  Dataset out;
  out.classes = classes;
  out.name = name;
  out.features = Matrix2D(classes * per_class, dim);
  out.labels.resize(classes * per_class);
  std::size_t row = 0;
  for (std::size_t c = 0; c < classes; ++c) {
    for (std::size_t k = 0; k < per_class; ++k, ++row) {
      double* f = out.features.row(row);
      const double* center = centers.row(c);
      for (std::size_t d = 0; d < dim; ++d) {
        f[d] = center[d] + spread * noise.next_gaussian();
      }
      out.labels[row] = c;
    }
  }
  return out;
}

}  // namespace

BlobsPair gen_blobs_pair(std::size_t classes, std::size_t train_per_class,
                         std::size_t test_per_class, std::size_t dim,
                         double spread, std::uint64_t seed) {
  if (classes < 2) throw ArgumentError("blobs need at least 2 classes");
  if (dim < 2) throw ArgumentError("blobs need dimension at least 2");
  if (train_per_class == 0) throw ArgumentError("blobs need at least 1 example per class");
  if (spread < 0.0) throw ArgumentError("blob spread must be non-negative");

  SeededRng root(seed);
  SeededRng center_rng = root.split(streams::kBlobCenters);
  Matrix2D centers(classes, dim);
  for (double& v : centers.values()) v = center_rng.next_gaussian();

  BlobsPair pair;
  pair.train = blobs_from_centers(centers, train_per_class, spread,
                                  root.split(streams::kBlobNoise), "blobs_train");
  if (test_per_class > 0) {
    pair.test = blobs_from_centers(centers, test_per_class, spread,
                                   root.split(streams::kBlobTestNoise), "blobs_test");
  }
  return pair;
}

Dataset gen_blobs(std::size_t classes, std::size_t per_class, std::size_t dim,
                  double spread, std::uint64_t seed) {
  return gen_blobs_pair(classes, per_class, 0, dim, spread, seed).train;
}

namespace {

std::uint32_t read_be_u32(std::ifstream& in, const std::string& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) {
    throw FormatError("truncated IDX header in " + path);
  }
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
         (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
  std::ifstream img(images_path, std::ios::binary);
  if (!img) throw IoError("cannot open " + images_path);
  std::ifstream lab(labels_path, std::ios::binary);
  if (!lab) throw IoError("cannot open " + labels_path);

  const std::uint32_t img_magic = read_be_u32(img, images_path);
  if (img_magic != 2051) {
    throw FormatError(images_path + ": expected image magic 2051, got " +
                      std::to_string(img_magic));
  }
  const std::uint32_t img_count = read_be_u32(img, images_path);
  const std::uint32_t rows = read_be_u32(img, images_path);
  const std::uint32_t cols = read_be_u32(img, images_path);

  const std::uint32_t lab_magic = read_be_u32(lab, labels_path);
  if (lab_magic != 2049) {
    throw FormatError(labels_path + ": expected label magic 2049, got " +
                      std::to_string(lab_magic));
  }
  const std::uint32_t lab_count = read_be_u32(lab, labels_path);
  if (img_count != lab_count) {
    throw FormatError("IDX count mismatch: " + std::to_string(img_count) +
                      " images vs " + std::to_string(lab_count) + " labels");
  }

  const std::size_t pixels = std::size_t(rows) * cols;
  Dataset out;
  out.name = "idx";
  out.features = Matrix2D(img_count, pixels);
  out.labels.resize(img_count);

  std::vector<unsigned char> buf(pixels);
  for (std::uint32_t i = 0; i < img_count; ++i) {
    if (!img.read(reinterpret_cast<char*>(buf.data()),
                  static_cast<std::streamsize>(pixels))) {
      throw FormatError("truncated image data in " + images_path);
    }
    double* f = out.features.row(i);
    for (std::size_t p = 0; p < pixels; ++p) f[p] = buf[p] / 255.0;
  }
  std::vector<unsigned char> lbuf(img_count);
  if (img_count > 0 &&
      !lab.read(reinterpret_cast<char*>(lbuf.data()),
                static_cast<std::streamsize>(img_count))) {
    throw FormatError("truncated label data in " + labels_path);
  }
  std::size_t max_label = 0;
  for (std::uint32_t i = 0; i < img_count; ++i) {
    out.labels[i] = lbuf[i];
    max_label = std::max(max_label, out.labels[i]);
  }
  out.classes = max_label + 1;
  return out;
}

TaskSequence split_tasks(const Dataset& train, const Dataset& test,
                         std::size_t tasks, std::uint64_t seed) {
  validate_dataset(train);
  validate_dataset(test);
  if (train.classes != test.classes) {
    throw ArgumentError("train and test class counts differ: " +
                        std::to_string(train.classes) + " vs " +
                        std::to_string(test.classes));
  }
  const std::size_t classes = train.classes;
  if (tasks == 0) throw ConfigError("task count must be at least 1");
  if (classes % tasks != 0) {
    throw ConfigError("class count " + std::to_string(classes) +
                      " is not divisible by task count " +
                      std::to_string(tasks) + "; choose a divisor");
  }
  const std::size_t per_task = classes / tasks;
  if (per_task < 2) {
    throw ConfigError("each task needs at least 2 classes; " +
                      std::to_string(tasks) + " tasks over " +
                      std::to_string(classes) + " classes leaves " +
                      std::to_string(per_task));
  }

  std::vector<std::size_t> perm(classes);
  for (std::size_t c = 0; c < classes; ++c) perm[c] = c;
  if (tasks > 1) {
    SeededRng rng = SeededRng(seed).split(streams::kTaskSplit);
    rng.shuffle(perm);
  }

  TaskSequence seq;
  for (std::size_t t = 0; t < tasks; ++t) {
    Task task;
    task.head_id = t;
    task.class_ids.assign(perm.begin() + t * per_task,
                          perm.begin() + (t + 1) * per_task);

    // original class id → within-task label
    std::vector<std::size_t> relabel(classes, classes);
    for (std::size_t j = 0; j < per_task; ++j) relabel[task.class_ids[j]] = j;

    for (const Dataset* src : {&train, &test}) {
      std::vector<std::size_t> rows;
      for (std::size_t i = 0; i < src->size(); ++i) {
        if (relabel[src->labels[i]] < classes) rows.push_back(i);
      }
      Dataset part = take_rows(*src, rows);
      part.classes = per_task;
      part.name = src->name + "_task" + std::to_string(t);
      for (std::size_t& l : part.labels) l = relabel[l];
      (src == &train ? task.train : task.test) = std::move(part);
    }
    seq.push_back(std::move(task));
  }
  return seq;
}

Dataset subsample(const Dataset& data, double fraction, std::uint64_t seed) {
  validate_dataset(data);
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw ArgumentError("subsample fraction must lie in (0,1], got " +
                        format_double(fraction));
  }
  std::vector<std::vector<std::size_t>> by_class(data.classes);
  for (std::size_t i = 0; i < data.size(); ++i) {
    by_class[data.labels[i]].push_back(i);
  }
  SeededRng rng = SeededRng(seed).split(streams::kSubsample);
  std::vector<std::size_t> keep;
  for (auto& rows : by_class) {
    const std::size_t want = static_cast<std::size_t>(
        std::ceil(fraction * static_cast<double>(rows.size())));
    rng.shuffle(rows);
    keep.insert(keep.end(), rows.begin(), rows.begin() + want);
  }
  std::sort(keep.begin(), keep.end());
  Dataset out = take_rows(data, keep);
  out.name = data.name + "_sub";
  return out;
}

Dataset corrupt(const Dataset& data, int level, std::uint64_t seed) {
  validate_dataset(data);
  if (level < 1 || level > 5) {
    throw ArgumentError("corruption level must be in 1..5, got " +
                        std::to_string(level));
  }
  for (double v : data.features.values()) {
    if (v < 0.0 || v > 1.0) {
      throw ArgumentError("corrupt expects features in [0,1]; normalize first");
    }
  }
  const double sigma = 0.05 * level;
  SeededRng rng = SeededRng(seed).split(streams::kCorrupt);
  Dataset out = data;
  out.name = data.name + "_c" + std::to_string(level);
  for (double& v : out.features.values()) {
    v = std::clamp(v + sigma * rng.next_gaussian(), 0.0, 1.0);
  }
  return out;
}

Normalizer fit_normalizer(const Dataset& data) {
  validate_dataset(data);
  const std::size_t dim = data.dim();
  Normalizer norm;
  norm.lo.assign(dim, 0.0);
  norm.hi.assign(dim, 0.0);
  for (std::size_t d = 0; d < dim; ++d) {
    double lo = data.features(0, d), hi = data.features(0, d);
    for (std::size_t i = 1; i < data.size(); ++i) {
      lo = std::min(lo, data.features(i, d));
      hi = std::max(hi, data.features(i, d));
    }
    norm.lo[d] = lo;
    norm.hi[d] = hi;
  }
  return norm;
}

Dataset apply_normalizer(const Normalizer& norm, const Dataset& data) {
  if (norm.lo.size() != data.dim()) {
    throw ShapeError("normalizer fitted on dimension " +
                     std::to_string(norm.lo.size()) + " applied to " +
                     std::to_string(data.dim()));
  }
  Dataset out = data;
  for (std::size_t i = 0; i < out.size(); ++i) {
    double* f = out.features.row(i);
    for (std::size_t d = 0; d < out.dim(); ++d) {
      const double range = norm.hi[d] - norm.lo[d];
      const double scaled = range > 0.0 ? (f[d] - norm.lo[d]) / range : 0.5;
      f[d] = std::clamp(scaled, 0.0, 1.0);
    }
  }
  return out;
}

void export_csv(const Dataset& data, const std::string& path) {
  std::vector<std::string> header;
  for (std::size_t d = 0; d < data.dim(); ++d) header.push_back("x" + std::to_string(d));
  header.push_back("label");
  std::vector<std::vector<std::string>> rows;
  rows.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    std::vector<std::string> row;
    row.reserve(data.dim() + 1);
    for (std::size_t d = 0; d < data.dim(); ++d) {
      row.push_back(format_double(data.features(i, d)));
    }
    row.push_back(std::to_string(data.labels[i]));
    rows.push_back(std::move(row));
  }
  write_csv(path, "dataset", header, rows);
}

}  // namespace batchens
