#pragma once

#include <cstdint>
#include <random>

namespace ept {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);
/// Two-level stream key (e.g. seed, purpose, sample index).
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b);

/// Deterministic random stream: mt19937_64 plus an explicit Box-Muller
/// normal (the stdlib normal_distribution leaves its spare-value caching
/// implementation-defined). Streams are cheap; training derives a fresh
/// stream per (seed, purpose, index) so replay never depends on saved
/// engine state.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : engine_(seed) {}
  RngStream(std::uint64_t seed, std::uint64_t stream) : engine_(mix_seed(seed, stream)) {}

  /// Uniform in [0, 1).
  double uniform();
  /// Uniform in [lo, hi).
  double uniform(double lo, double hi);
  /// Standard normal via Box-Muller.
  double normal();
  /// Uniformly distributed unit 3-vector.
  void unit3(double out[3]);
  /// Uniform integer in [0, n).
  std::uint64_t index(std::uint64_t n);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace ept
