#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace ler {

/// SplitMix64 finalizer. Bijective on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Counter-based 64-bit generator.
///
/// Draw `i` of a stream is `mix64(key + i * gamma)`, so any draw can be
/// recomputed from (key, counter) alone and derived streams never depend on
/// how far the parent has advanced. Every random decision in the project
/// (weight init, corpus sampling, shuffling) goes through this type.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed = 0, std::uint64_t stream = 0) noexcept
      : key_(mix64(seed ^ mix64(stream ^ 0xD1B54A32D192ED03ULL))) {}

  /// Independent child stream keyed on this stream's key (not its position).
  CounterRng fork(std::uint64_t stream) const noexcept {
    CounterRng child;
    child.key_ = mix64(key_ ^ mix64(stream + 0x632BE59BD9B4E019ULL));
    return child;
  }

  std::uint64_t next_u64() noexcept {
    ++counter_;
    return mix64(key_ + counter_ * 0x9E3779B97F4A7C15ULL);
  }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() noexcept {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Uniform integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n) noexcept {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return x % n;
  }

  /// Uniform integer in [lo, hi].
  int between(int lo, int hi) noexcept {
    return lo + static_cast<int>(below(static_cast<std::uint64_t>(hi - lo) + 1));
  }

  /// Standard normal via Box-Muller (one value per call; no cached pair).
  double normal() noexcept {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Normal(0, sigma) truncated to [-2 sigma, 2 sigma] by resampling.
  double truncated_normal(double sigma) noexcept {
    double z = normal();
    while (std::abs(z) > 2.0) z = normal();
    return z * sigma;
  }

  std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

}  // namespace ler
