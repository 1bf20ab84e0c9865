#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <utility>

namespace intentscale {

/// 64-bit FNV-1a. Used for token bucketing and catalog fingerprints, so the
/// constants must never change.
constexpr std::uint64_t fnv1a64(std::string_view data,
                                std::uint64_t hash = 0xcbf29ce484222325ULL) noexcept {
  for (unsigned char c : data) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

std::uint64_t splitmix64(std::uint64_t x) noexcept;

/// Seeded pseudo-random source with implementation-independent draws.
///
/// std::mt19937_64 output is fully specified by the standard, but the
/// standard distributions are not; everything here is derived from raw
/// engine words so streams are reproducible across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// True with probability p; p <= 0 never fires and p >= 1 always fires.
  bool bernoulli(double p) { return uniform() < p; }

  /// Uniform integer in [0, n), unbiased. n must be positive.
  std::size_t below(std::size_t n);

  /// Derives an independent child generator for a named stream.
  Rng fork(std::uint64_t stream) { return Rng(splitmix64(engine_() ^ splitmix64(stream))); }

  template <class T>
  void shuffle(std::span<T> values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      std::swap(values[i - 1], values[below(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

/// Deterministic seed for a (base seed, stream) pair without consuming a
/// generator.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) noexcept {
  return splitmix64(splitmix64(base) ^ (stream * 0x9e3779b97f4a7c15ULL));
}

}  // namespace intentscale
