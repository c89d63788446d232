#pragma once

#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <cmath>

namespace wafertopo {

// SplitMix64 finalizer (Stafford variant 13).
constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Folds a list of integers into a single 64-bit seed. Used to derive per-item
// and per-stage seeds from a master seed.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = mix64(seed ^ 0x6a09e667f3bcc909ULL);
  for (std::uint64_t p : parts) h = mix64(h ^ mix64(p + 0x9e3779b97f4a7c15ULL));
  return h;
}

/// Counter-based 64-bit generator.
///
/// The i-th output of stream (seed, stream_id) is
///   mix64(key + (i + 1) * 0x9e3779b97f4a7c15), key = mix64(seed ^ mix64(stream_id + C)).
/// Only integer arithmetic is involved, so sequences are identical on every
/// platform. Distinct stream ids give unrelated keys; generators use one stream
/// per stage (base pattern, texture, defects, ...) so that stages never share draws.
class Rng {
 public:
  Rng(std::uint64_t seed, std::uint32_t stream_id)
      : key_(mix64(seed ^ mix64(static_cast<std::uint64_t>(stream_id) + 0xd1b54a32d192ed03ULL))) {}

  std::uint64_t next_u64() {
    ++counter_;
    return mix64(key_ + counter_ * 0x9e3779b97f4a7c15ULL);
  }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [lo, hi] (inclusive), unbiased by rejection.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    if (hi <= lo) return lo;
    const std::uint64_t range = static_cast<std::uint64_t>(hi - lo) + 1;
    if (range == 0) return static_cast<std::int64_t>(next_u64());
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % range);
    std::uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return lo + static_cast<std::int64_t>(x % range);
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Standard normal via Box-Muller; the second variate is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double th = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(th);
    has_spare_ = true;
    return r * std::cos(th);
  }

  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace wafertopo
