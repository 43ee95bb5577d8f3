#include "batchens/rng.hpp"

#include <cmath>
#include <numbers>

#include "batchens/error.hpp"

namespace batchens {

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

// splitmix64 finalizer.
std::uint64_t mix(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace

std::uint64_t SeededRng::next_u64() {
  counter_ += 1;
  return mix(seed_ + counter_ * kGolden);
}

double SeededRng::next_unit() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double SeededRng::next_uniform(double lo, double hi) {
  return lo + (hi - lo) * next_unit();
}

double SeededRng::next_gaussian() {
  // u1 must be strictly positive for the log.
  double u1 = next_unit();
  if (u1 <= 0.0) u1 = 0x1.0p-53;
  const double u2 = next_unit();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double SeededRng::next_sign() { return (next_u64() & 1u) ? 1.0 : -1.0; }

std::uint64_t SeededRng::next_below(std::uint64_t n) {
  if (n == 0) throw ArgumentError("next_below: n must be positive");
  // Rejection sampling keeps the draw unbiased; consumption stays
  // deterministic because rejections depend only on the stream itself.
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t v = next_u64();
  while (v >= limit) v = next_u64();
  return v % n;
}

SeededRng SeededRng::split(std::uint64_t stream) const {
  return SeededRng(mix(seed_ ^ mix(stream + kGolden)));
}

std::uint64_t offset_seed(std::uint64_t seed, std::uint64_t offset) {
  return seed + offset * kGolden;
}

std::vector<double> sign_vector(std::size_t dim, SeededRng& rng) {
  if (dim == 0) throw ArgumentError("sign_vector: dim must be at least 1");
  std::vector<double> v(dim);
  for (double& e : v) e = rng.next_sign();
  return v;
}

}  // namespace batchens
