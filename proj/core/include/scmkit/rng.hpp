#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace scmkit {

/**
 * SplitMix64 generator (Steele, Lea & Flood 2014).
 *
 * Stream splitting: the generator for stream `id` under master seed `seed`
 * starts from state `seed ^ mix(id + 1)`, where `mix` is the SplitMix64
 * output finalizer. Normal variates use Box-Muller on two consecutive
 * uniforms and consume exactly two draws each (the sine branch is discarded),
 * so a sequence is a pure function of (seed, id, call order).
 */
class SplitMix64 {
 public:
  static constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

  explicit constexpr SplitMix64(std::uint64_t state) noexcept : state_(state) {}

  static constexpr SplitMix64 stream(std::uint64_t seed, std::uint64_t id) noexcept {
    return SplitMix64(seed ^ mix(id + 1));
  }

  static constexpr std::uint64_t mix(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  constexpr std::uint64_t next() noexcept {
    state_ += kGolden;
    return mix(state_);
  }

  /// Uniform on [0, 1) with 53 bits of resolution.
  constexpr double uniform() noexcept {
    return static_cast<double>(next() >> 11) * 0x1.0p-53;
  }

  constexpr double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  double normal() noexcept {
    // 1 - u keeps the log argument in (0, 1].
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::uint64_t state_;
};

}  // namespace scmkit
