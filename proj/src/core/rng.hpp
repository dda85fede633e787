#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace hgr {

/// Seeded random source. Every stochastic component (weight init, shuffling,
/// dropout, augmentation, synthetic data) draws from its own Rng derived from
/// the run seed plus a stream tag, so components stay decoupled and runs
/// reproduce exactly.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  /// Sub-stream with a stable tag. fork("dropout") and fork("augment") from
  /// the same parent never overlap.
  Rng fork(std::string_view tag) const {
    std::uint64_t h = 1469598103934665603ull;  // FNV-1a
    for (char ch : tag) {
      h ^= static_cast<unsigned char>(ch);
      h *= 1099511628211ull;
    }
    return Rng(mix(seed_, h));
  }

  Rng fork(std::uint64_t index) const {
    return Rng(mix(seed_, 0x9e3779b97f4a7c15ull + index));
  }

  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }

  double normal(double mean, double stddev) {
    return std::normal_distribution<double>(mean, stddev)(engine_);
  }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    return std::uniform_int_distribution<std::uint64_t>(0, n - 1)(engine_);
  }

  bool bernoulli(double p) { return std::bernoulli_distribution(p)(engine_); }

  std::mt19937_64& engine() { return engine_; }
  std::uint64_t seed() const { return seed_; }

 private:
  static std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
    // splitmix64 finalizer over the combined value
    std::uint64_t z = a + 0x9e3779b97f4a7c15ull * (b | 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  std::uint64_t seed_ = 0;
  std::mt19937_64 engine_;
};

}  // namespace hgr
