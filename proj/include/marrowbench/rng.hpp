#pragma once

#include <cstdint>
#include <string_view>

namespace marrowbench {

// Counter-free splitmix64 generator with unbiased bounded draws.
//
// Every randomized routine in this library derives its stream from a single
// top-level seed through named substreams, and results must be bit-identical
// across platforms, runs, and thread counts. std::uniform_int_distribution is
// implementation-defined, so resampling is built on this fixed algorithm
// instead of <random> distributions.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform integer in [0, n) via Lemire's multiply-shift rejection.
  uint64_t bounded(uint64_t n);

  // Uniform double in [0, 1) with 53 bits of precision.
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Standard normal deviate (Box-Muller, two fresh uniforms per call).
  double next_gauss();

  // Independent stream for a named purpose. Streams for distinct
  // (seed, name, index) triples are decorrelated by construction.
  static Rng substream(uint64_t seed, std::string_view name, uint64_t index = 0);

 private:
  uint64_t state_;
};

}  // namespace marrowbench
