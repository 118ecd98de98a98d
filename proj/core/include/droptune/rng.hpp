#ifndef DROPTUNE_RNG_HPP
#define DROPTUNE_RNG_HPP

#include <cstddef>
#include <cstdint>
#include <random>

namespace droptune {

// Seeded generator with platform-stable conversions.
//
// std::mt19937_64 has a fully specified output sequence, but the standard
// distributions do not, so uniform/normal/index draws are derived here from
// raw 64-bit words. Two Rng objects built from the same seed produce the same
// stream on every conforming toolchain.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1) with 53 bits of resolution.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform on the open interval (0, 1).
  double uniform_open() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  // Uniform on the open interval (lo, hi).
  double uniform_open(double lo, double hi) {
    return lo + (hi - lo) * uniform_open();
  }

  // Uniform integer in [0, n). Rejection sampling keeps it unbiased.
  std::size_t index(std::size_t n);

  // Standard normal via Box-Muller (one draw per call; the pair's twin is discarded).
  double normal();

  // Bernoulli(p) draw.
  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::mt19937_64 engine_;
};

// splitmix64 finalizer: a bijective 64-bit mix.
constexpr std::uint64_t splitmix64_mix(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline constexpr std::uint64_t kGoldenGamma = 0x9E3779B97F4A7C15ULL;

}  // namespace droptune

#endif  // DROPTUNE_RNG_HPP
