#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace curlm {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Independent random streams used by the trainer. Each per-step generator is
/// seeded with derive_seed(global_seed, stream, index).
enum class Stream : std::uint64_t { Mask = 1, Dropout = 2, Shuffle = 3, Init = 4 };

/// seed = splitmix64(global ^ splitmix64(stream * 2^32 + index)). Any batch can
/// be prepared from (global seed, batch index) alone, in any order.
inline std::uint64_t derive_seed(std::uint64_t global_seed, Stream stream, std::uint64_t index) {
  const std::uint64_t tagged = (static_cast<std::uint64_t>(stream) << 32) + index;
  return splitmix64(global_seed ^ splitmix64(tagged));
}

/// Thin wrapper over mt19937_64. Uniforms are built from raw bits rather than
/// std::uniform_real_distribution so results do not depend on the standard
/// library's distribution implementation.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  bool bernoulli(double p) { return uniform() < p; }

  /// Standard normal via Box-Muller (one value per call; the spare is cached).
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  /// Uniform integer in [0, n). Rejection sampling, no modulo bias.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x = engine_();
    while (x >= limit) x = engine_();
    return x % n;
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace curlm
