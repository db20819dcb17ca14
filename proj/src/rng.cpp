#include "marrowbench/rng.hpp"

#include <cmath>

#include "marrowbench/hash.hpp"

namespace marrowbench {

uint64_t Rng::bounded(uint64_t n) {
  // Lemire 2019. The rejection on the low word removes modulo bias.
  uint64_t x = next_u64();
  __uint128_t m = static_cast<__uint128_t>(x) * n;
  uint64_t l = static_cast<uint64_t>(m);
  if (l < n) {
    uint64_t t = -n % n;
    while (l < t) {
      x = next_u64();
      m = static_cast<__uint128_t>(x) * n;
      l = static_cast<uint64_t>(m);
    }
  }
  return static_cast<uint64_t>(m >> 64);
}

double Rng::next_gauss() {
  double u1 = next_double();
  double u2 = next_double();
  if (u1 <= 0.0) u1 = 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
}

Rng Rng::substream(uint64_t seed, std::string_view name, uint64_t index) {
  uint64_t h = fnv1a64(name);
  // Feed seed, name hash and index through one mixing round each so that
  // adjacent seeds or indices do not yield overlapping streams.
  Rng mixer(seed);
  uint64_t a = mixer.next_u64();
  Rng mixer2(a ^ h);
  uint64_t b = mixer2.next_u64();
  Rng mixer3(b ^ (index * 0x9e3779b97f4a7c15ull + 0x2545f4914f6cdd1dull));
  return Rng(mixer3.next_u64());
}

}  // namespace marrowbench
