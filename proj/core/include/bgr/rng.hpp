#pragma once

#include <cstdint>
#include <random>

namespace bgr {

// splitmix64 finalizer; decorrelates nearby seeds before they reach the engine
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Seeded stream of randomness. Every stochastic routine in the toolkit takes
// one of these explicitly; derive independent streams with `fork`.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(mix_seed(seed)) {}

  // Independent stream keyed by (this stream's seed path, id).
  Rng fork(std::uint64_t id) {
    return Rng(mix_seed(engine_() ^ mix_seed(id)));
  }

  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }
  // uniform draw from {0, ..., n-1}
  std::uint64_t below(std::uint64_t n) {
    return std::uniform_int_distribution<std::uint64_t>(0, n - 1)(engine_);
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace bgr
