#pragma once

#include <cstdint>
#include <random>

namespace edgedet {

// Seed used for pseudo-random weights when no seed is given.
inline constexpr std::uint64_t kDefaultWeightSeed = 20240607;

// Deterministic generator with implementation-independent output (std::mt19937_64
// is fully specified; the std distributions are not, so they are avoided here).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  float uniform(float lo, float hi) {
    return static_cast<float>(lo + (static_cast<double>(hi) - lo) * uniform());
  }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) { return n == 0 ? 0 : engine_() % n; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace edgedet
