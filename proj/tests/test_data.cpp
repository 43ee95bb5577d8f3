#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "batchens/data.hpp"
#include "batchens/error.hpp"
#include "batchens/rng.hpp"

using namespace batchens;

namespace {

bool bits_equal(const Matrix2D& a, const Matrix2D& b) {
  if (!a.same_shape(b)) return false;
  return std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

void write_bytes(const std::string& path, const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary);
  REQUIRE(out.good());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

void push_be_u32(std::vector<unsigned char>& v, std::uint32_t x) {
  v.push_back((x >> 24) & 0xff);
  v.push_back((x >> 16) & 0xff);
  v.push_back((x >> 8) & 0xff);
  v.push_back(x & 0xff);
}

std::vector<unsigned char> idx_images(std::uint32_t count, std::uint32_t rows,
                                      std::uint32_t cols,
                                      const std::vector<unsigned char>& pixels,
                                      std::uint32_t magic = 2051) {
  std::vector<unsigned char> v;
  push_be_u32(v, magic);
  push_be_u32(v, count);
  push_be_u32(v, rows);
  push_be_u32(v, cols);
  v.insert(v.end(), pixels.begin(), pixels.end());
  return v;
}

std::vector<unsigned char> idx_labels(std::uint32_t count,
                                      const std::vector<unsigned char>& labels,
                                      std::uint32_t magic = 2049) {
  std::vector<unsigned char> v;
  push_be_u32(v, magic);
  push_be_u32(v, count);
  v.insert(v.end(), labels.begin(), labels.end());
  return v;
}

std::string tmp_path(const std::string& name) {
  return "test_data_tmp_" + name;
}

}  // namespace

TEST_CASE("gen_blobs argument validation") {
  CHECK_THROWS_AS(gen_blobs(1, 10, 4, 0.1, 1), ArgumentError);
  CHECK_THROWS_AS(gen_blobs(2, 10, 1, 0.1, 1), ArgumentError);
  CHECK_THROWS_AS(gen_blobs(2, 0, 4, 0.1, 1), ArgumentError);
  CHECK_THROWS_AS(gen_blobs(2, 10, 4, -0.1, 1), ArgumentError);
}

TEST_CASE("gen_blobs is deterministic and class-major") {
  Dataset a = gen_blobs(3, 5, 4, 0.2, 42);
  Dataset b = gen_blobs(3, 5, 4, 0.2, 42);
  CHECK(bits_equal(a.features, b.features));
  CHECK(a.labels == b.labels);
  CHECK(a.size() == 15);
  CHECK(a.classes == 3);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.labels[i] == i / 5);

  Dataset c = gen_blobs(3, 5, 4, 0.2, 43);
  CHECK_FALSE(bits_equal(a.features, c.features));
}

TEST_CASE("zero spread collapses every class to its center") {
  Dataset d = gen_blobs(4, 6, 3, 0.0, 7);
  for (std::size_t c = 0; c < 4; ++c) {
    const double* first = d.features.row(c * 6);
    for (std::size_t k = 1; k < 6; ++k) {
      const double* row = d.features.row(c * 6 + k);
      for (std::size_t j = 0; j < 3; ++j) CHECK(row[j] == first[j]);
    }
  }
}

TEST_CASE("train/test pair shares centers and disjoint noise") {
  BlobsPair zero = gen_blobs_pair(3, 4, 4, 5, 0.0, 11);
  CHECK(bits_equal(zero.train.features, zero.test.features));  // both = centers

  BlobsPair pair = gen_blobs_pair(3, 4, 4, 5, 0.3, 11);
  CHECK_FALSE(bits_equal(pair.train.features, pair.test.features));
  CHECK(bits_equal(pair.train.features, gen_blobs(3, 4, 5, 0.3, 11).features));
}

TEST_CASE("well-separated blobs are solved by a nearest-centroid oracle") {
  const std::size_t dim = 200;
  BlobsPair pair = gen_blobs_pair(2, 30, 30, dim, 0.1, 3);

  // verify the separation precondition: the two centers are ≥ 10 apart
  Matrix2D centroid(2, dim, 0.0);
  std::vector<std::size_t> counts(2, 0);
  for (std::size_t i = 0; i < pair.train.size(); ++i) {
    const std::size_t c = pair.train.labels[i];
    for (std::size_t j = 0; j < dim; ++j) centroid(c, j) += pair.train.features(i, j);
    ++counts[c];
  }
  for (std::size_t c = 0; c < 2; ++c) {
    for (std::size_t j = 0; j < dim; ++j) centroid(c, j) /= static_cast<double>(counts[c]);
  }
  double dist2 = 0.0;
  for (std::size_t j = 0; j < dim; ++j) {
    const double d = centroid(0, j) - centroid(1, j);
    dist2 += d * d;
  }
  REQUIRE(std::sqrt(dist2) >= 10.0);

  std::size_t hits = 0;
  for (std::size_t i = 0; i < pair.test.size(); ++i) {
    double best = 0.0;
    std::size_t best_c = 0;
    for (std::size_t c = 0; c < 2; ++c) {
      double d2 = 0.0;
      for (std::size_t j = 0; j < dim; ++j) {
        const double d = pair.test.features(i, j) - centroid(c, j);
        d2 += d * d;
      }
      if (c == 0 || d2 < best) {
        best = d2;
        best_c = c;
      }
    }
    if (best_c == pair.test.labels[i]) ++hits;
  }
  CHECK(hits == pair.test.size());
}

TEST_CASE("IDX loader reads a hand-built fixture") {
  const std::string img_path = tmp_path("img.idx");
  const std::string lab_path = tmp_path("lab.idx");
  write_bytes(img_path, idx_images(2, 2, 2, {0, 255, 255, 0, 255, 255, 0, 0}));
  write_bytes(lab_path, idx_labels(2, {0, 1}));

  Dataset d = load_idx(img_path, lab_path);
  CHECK(d.size() == 2);
  CHECK(d.dim() == 4);
  CHECK(d.classes == 2);
  CHECK(d.features(0, 0) == 0.0);
  CHECK(d.features(0, 1) == 1.0);
  CHECK(d.features(1, 3) == 0.0);
  CHECK(d.labels[0] == 0);
  CHECK(d.labels[1] == 1);

  std::remove(img_path.c_str());
  std::remove(lab_path.c_str());
}

TEST_CASE("IDX loader round-trips raw bytes through the 1/255 scaling") {
  SeededRng rng(19);
  std::vector<unsigned char> pixels(3 * 4);
  for (auto& p : pixels) p = static_cast<unsigned char>(rng.next_below(256));
  const std::string img_path = tmp_path("rt_img.idx");
  const std::string lab_path = tmp_path("rt_lab.idx");
  write_bytes(img_path, idx_images(3, 2, 2, pixels));
  write_bytes(lab_path, idx_labels(3, {2, 0, 1}));

  Dataset d = load_idx(img_path, lab_path);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t p = 0; p < 4; ++p) {
      const long back = std::lrint(d.features(i, p) * 255.0);
      CHECK(back == pixels[i * 4 + p]);
    }
  }
  std::remove(img_path.c_str());
  std::remove(lab_path.c_str());
}

TEST_CASE("IDX loader rejects malformed files") {
  const std::string img_path = tmp_path("bad_img.idx");
  const std::string lab_path = tmp_path("bad_lab.idx");

  // label file carrying the image magic
  write_bytes(img_path, idx_images(2, 2, 2, std::vector<unsigned char>(8, 0)));
  write_bytes(lab_path, idx_labels(2, {0, 1}, 2051));
  CHECK_THROWS_AS(load_idx(img_path, lab_path), FormatError);

  // count mismatch: 3 images vs 2 labels
  write_bytes(img_path, idx_images(3, 2, 2, std::vector<unsigned char>(12, 0)));
  write_bytes(lab_path, idx_labels(2, {0, 1}));
  CHECK_THROWS_AS(load_idx(img_path, lab_path), FormatError);

  // truncated image payload
  write_bytes(img_path, idx_images(3, 2, 2, std::vector<unsigned char>(5, 0)));
  write_bytes(lab_path, idx_labels(3, {0, 1, 0}));
  CHECK_THROWS_AS(load_idx(img_path, lab_path), FormatError);

  CHECK_THROWS_AS(load_idx("no_such_file.idx", lab_path), IoError);

  std::remove(img_path.c_str());
  std::remove(lab_path.c_str());
}

TEST_CASE("split_tasks partitions classes disjointly") {
  BlobsPair pair = gen_blobs_pair(10, 8, 4, 3, 0.2, 23);
  TaskSequence seq = split_tasks(pair.train, pair.test, 5, 23);
  REQUIRE(seq.size() == 5);

  std::set<std::size_t> seen;
  std::size_t total_train = 0, total_test = 0;
  for (std::size_t t = 0; t < 5; ++t) {
    const Task& task = seq[t];
    CHECK(task.head_id == t);
    CHECK(task.class_ids.size() == 2);
    for (std::size_t c : task.class_ids) {
      CHECK(seen.insert(c).second);  // brute-force disjointness
    }
    CHECK(task.train.classes == 2);
    for (std::size_t l : task.train.labels) CHECK(l < 2);
    total_train += task.train.size();
    total_test += task.test.size();

    // each row's original class is the within-task label's class id
    for (std::size_t i = 0; i < task.train.size(); ++i) {
      const std::size_t orig = task.class_ids[task.train.labels[i]];
      bool found = false;
      for (std::size_t j = 0; j < pair.train.size() && !found; ++j) {
        if (pair.train.labels[j] == orig &&
            std::memcmp(pair.train.features.row(j), task.train.features.row(i),
                        3 * sizeof(double)) == 0) {
          found = true;
        }
      }
      CHECK(found);
    }
  }
  CHECK(seen.size() == 10);
  CHECK(total_train == pair.train.size());
  CHECK(total_test == pair.test.size());
}

TEST_CASE("split_tasks degenerate and invalid cases") {
  BlobsPair pair = gen_blobs_pair(10, 3, 2, 3, 0.2, 29);
  TaskSequence one = split_tasks(pair.train, pair.test, 1, 29);
  REQUIRE(one.size() == 1);
  CHECK(one[0].train.labels == pair.train.labels);  // labels re-indexed identically
  CHECK(bits_equal(one[0].train.features, pair.train.features));

  CHECK_THROWS_AS(split_tasks(pair.train, pair.test, 3, 29), ConfigError);
  CHECK_THROWS_AS(split_tasks(pair.train, pair.test, 10, 29), ConfigError);
}

TEST_CASE("subsample is stratified and membership-correct") {
  Dataset d = gen_blobs(4, 100, 3, 0.2, 31);
  Dataset full = subsample(d, 1.0, 5);
  CHECK(full.size() == d.size());
  CHECK(bits_equal(full.features, d.features));

  Dataset half = subsample(d, 0.5, 5);
  CHECK(half.size() == 200);
  std::vector<std::size_t> per_class(4, 0);
  for (std::size_t l : half.labels) ++per_class[l];
  for (std::size_t c = 0; c < 4; ++c) CHECK(per_class[c] == 50);

  // membership oracle: every sampled row appears in the original
  for (std::size_t i = 0; i < half.size(); ++i) {
    bool found = false;
    for (std::size_t j = 0; j < d.size() && !found; ++j) {
      if (d.labels[j] == half.labels[i] &&
          std::memcmp(d.features.row(j), half.features.row(i),
                      3 * sizeof(double)) == 0) {
        found = true;
      }
    }
    CHECK(found);
  }

  CHECK_THROWS_AS(subsample(d, 0.0, 5), ArgumentError);
  CHECK_THROWS_AS(subsample(d, 1.1, 5), ArgumentError);

  // different fractions of the same seed nest deterministically
  Dataset again = subsample(d, 0.5, 5);
  CHECK(bits_equal(again.features, half.features));
}

TEST_CASE("corrupt clips to the unit interval and validates") {
  Dataset d = gen_blobs(3, 20, 4, 0.5, 37);
  CHECK_THROWS_AS(corrupt(d, 1, 1), ArgumentError);  // features not in [0,1]

  Normalizer norm = fit_normalizer(d);
  Dataset unit = apply_normalizer(norm, d);
  for (double v : unit.features.values()) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }

  CHECK_THROWS_AS(corrupt(unit, 0, 1), ArgumentError);
  CHECK_THROWS_AS(corrupt(unit, 6, 1), ArgumentError);

  Dataset noisy = corrupt(unit, 5, 1);
  for (double v : noisy.features.values()) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  CHECK_FALSE(bits_equal(noisy.features, unit.features));
  CHECK(noisy.labels == unit.labels);

  Dataset again = corrupt(unit, 5, 1);
  CHECK(bits_equal(again.features, noisy.features));

  // higher level adds more noise on average
  Dataset mild = corrupt(unit, 1, 1);
  double mild_shift = 0.0, harsh_shift = 0.0;
  for (std::size_t i = 0; i < unit.features.size(); ++i) {
    mild_shift += std::fabs(mild.features.values()[i] - unit.features.values()[i]);
    harsh_shift += std::fabs(noisy.features.values()[i] - unit.features.values()[i]);
  }
  CHECK(harsh_shift > mild_shift);
}

TEST_CASE("normalizer maps the fitted set onto [0,1] and clips others") {
  Dataset d = gen_blobs(2, 50, 3, 1.0, 41);
  Normalizer norm = fit_normalizer(d);
  Dataset unit = apply_normalizer(norm, d);
  for (std::size_t j = 0; j < 3; ++j) {
    double lo = 1.0, hi = 0.0;
    for (std::size_t i = 0; i < unit.size(); ++i) {
      lo = std::min(lo, unit.features(i, j));
      hi = std::max(hi, unit.features(i, j));
    }
    CHECK(lo == 0.0);
    CHECK(hi == 1.0);
  }

  Dataset other = gen_blobs(2, 50, 3, 1.0, 43);
  Dataset mapped = apply_normalizer(norm, other);
  for (double v : mapped.features.values()) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }

  Dataset wrong = gen_blobs(2, 10, 5, 1.0, 43);
  CHECK_THROWS_AS(apply_normalizer(norm, wrong), ShapeError);
}

TEST_CASE("take_rows and dataset validation") {
  Dataset d = gen_blobs(2, 5, 3, 0.2, 47);
  Dataset sub = take_rows(d, {0, 9, 3});
  CHECK(sub.size() == 3);
  CHECK(sub.labels[0] == d.labels[0]);
  CHECK(sub.labels[1] == d.labels[9]);
  CHECK(std::memcmp(sub.features.row(2), d.features.row(3), 3 * sizeof(double)) == 0);
  CHECK_THROWS_AS(take_rows(d, {10}), IndexError);

  Dataset bad = d;
  bad.labels[0] = 7;
  CHECK_THROWS_AS(validate_dataset(bad), ArgumentError);
  bad = d;
  bad.labels.pop_back();
  CHECK_THROWS_AS(validate_dataset(bad), ShapeError);
}

TEST_CASE("dataset CSV export is deterministic") {
  Dataset d = gen_blobs(2, 3, 2, 0.2, 53);
  const std::string p1 = tmp_path("a.csv");
  const std::string p2 = tmp_path("b.csv");
  export_csv(d, p1);
  export_csv(d, p2);

  std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
  std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(s1 == s2);
  CHECK(s1.rfind("# schema: dataset v1\n", 0) == 0);
  CHECK(s1.find("x0,x1,label") != std::string::npos);

  std::remove(p1.c_str());
  std::remove(p2.c_str());
}
