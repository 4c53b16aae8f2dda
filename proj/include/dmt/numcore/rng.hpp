#pragma once

#include <cmath>
#include <cstdint>

namespace dmt {

/// SplitMix64: a counter-based generator. The k-th output is
/// mix(seed + k·0x9E3779B97F4A7C15) with the finalizer
///   z = (z ^ (z >> 30)) · 0xBF58476D1CE4E5B9
///   z = (z ^ (z >> 27)) · 0x94D049BB133111EB
///   z =  z ^ (z >> 31)
/// so any implementation reproduces the same stream from the same seed.
class SplitMix64 {
 public:
  static constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;

  explicit SplitMix64(std::uint64_t seed = 0) : state_(seed) {}

  static constexpr std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::uint64_t next() {
    state_ += kGamma;
    return mix(state_);
  }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n); n > 0.
  std::uint64_t below(std::uint64_t n) { return next() % n; }

  bool coin(double p = 0.5) { return uniform() < p; }

  /// Standard normal via Box-Muller (one draw per call, no cached pair).
  double normal() {
    double u1 = uniform();
    if (u1 < 0x1.0p-53) u1 = 0x1.0p-53;
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  /// Independent stream keyed by `tag`.
  SplitMix64 fork(std::uint64_t tag) const { return SplitMix64(mix(state_ ^ mix(tag + kGamma))); }

  std::uint64_t state() const { return state_; }

 private:
  std::uint64_t state_;
};

}  // namespace dmt
