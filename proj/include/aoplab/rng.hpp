#pragma once

#include <cstdint>
#include <random>

namespace aoplab {

/// Deterministic random source used everywhere in the lab.
///
/// std::mt19937_64 output is fully specified by the standard, and the
/// transformations below (uniform doubles from the top 53 bits, Box-Muller
/// normals) are written out explicitly instead of relying on
/// std::*_distribution, whose streams differ between standard libraries.
/// Identical seeds therefore give bitwise-identical draws on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Uniform integer in [0, n), n > 0. Multiply-shift bound (bias < n/2^64).
  std::uint64_t uniform_below(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  /// Standard normal via Box-Muller; the second draw of each pair is cached.
  double normal();

  /// Fisher-Yates shuffle driven by this stream.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// SplitMix64 mix, used to derive decorrelated sub-seeds from (seed, tag).
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag);

}  // namespace aoplab
