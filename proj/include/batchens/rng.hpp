#pragma once

#include <cstdint>
#include <vector>

namespace batchens {

// Purpose tags for deriving independent sub-streams from one experiment seed.
// Keeping these in one place documents which part of the pipeline consumes
// which stream; changing e.g. the shuffle stream never perturbs the init
// stream.
namespace streams {
constexpr std::uint64_t kParamInit = 1;   // slow/fast weight initialization
constexpr std::uint64_t kShuffle = 2;     // epoch shuffling
constexpr std::uint64_t kDropout = 3;     // dropout masks
constexpr std::uint64_t kBlobCenters = 4; // synthetic class centers
constexpr std::uint64_t kBlobNoise = 5;   // synthetic train features
constexpr std::uint64_t kBlobTestNoise = 6;
constexpr std::uint64_t kSubsample = 7;
constexpr std::uint64_t kCorrupt = 8;
constexpr std::uint64_t kTaskSplit = 9;   // class partition for task streams
constexpr std::uint64_t kTask = 10;       // per-task training streams (offset by task id)
constexpr std::uint64_t kMember = 11;     // per-member training cells (offset by member id)
constexpr std::uint64_t kEvalDropout = 12;  // test-time dropout sampling
}  // namespace streams

// Counter-based deterministic RNG (splitmix64 output function). The state is
// just (seed, counter), so identical seeds replay identical streams and
// split() derives statistically independent sub-streams without sharing
// state.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed) : seed_(seed) {}

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64();

  // Uniform in [0, 1) with 53 random bits.
  double next_unit();

  double next_uniform(double lo, double hi);

  // Standard normal via Box–Muller; consumes two uniforms per call.
  double next_gaussian();

  // Fair draw from {−1, +1}.
  double next_sign();

  // Uniform integer in [0, n); n must be positive. Unbiased (rejection).
  std::uint64_t next_below(std::uint64_t n);

  // Independent sub-stream for the given purpose tag.
  SeededRng split(std::uint64_t stream) const;

  // In-place Fisher–Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(next_below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

// Derives the seed for an independent training cell (ensemble member j,
// lifelong task t, ...). Offset 0 returns `seed` unchanged so a degenerate
// one-cell run is literally the base run.
std::uint64_t offset_seed(std::uint64_t seed, std::uint64_t offset);

// Vector with every entry an independent fair draw from {−1, +1}.
std::vector<double> sign_vector(std::size_t dim, SeededRng& rng);

}  // namespace batchens
