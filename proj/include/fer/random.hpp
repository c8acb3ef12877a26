#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace fer {

/// Mixes an ordered tuple of integers into a single 64-bit seed (splitmix64 finalizer
/// chained over the components). Used to derive per-sample and per-class streams.
inline std::uint64_t mix_key(std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = 0x9E3779B97F4A7C15ULL;
  for (std::uint64_t p : parts) {
    h ^= p + 0x9E3779B97F4A7C15ULL + (h << 6) + (h >> 2);
    std::uint64_t z = h;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    h = z ^ (z >> 31);
  }
  return h;
}

/// Deterministic stream keyed by a tuple. The raw mt19937_64 output sequence is fixed
/// by the standard; the conversions below avoid std distributions, whose algorithms
/// are implementation-defined.
class KeyedRng {
public:
  explicit KeyedRng(std::uint64_t key) : engine_(key) {}
  KeyedRng(std::initializer_list<std::uint64_t> parts) : engine_(mix_key(parts)) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  bool bernoulli(double p) { return uniform01() < p; }

  /// Uniform integer in [0, n), rejection-sampled so there is no modulo bias.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

private:
  std::mt19937_64 engine_;
};

} // namespace fer
