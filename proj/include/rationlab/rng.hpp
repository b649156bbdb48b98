#pragma once

#include <cstdint>

namespace rationlab {

// SplitMix64: a named, seedable, portable 64-bit generator (Steele et al. 2014).
// All randomness in the library flows through this type so results are
// bit-reproducible across platforms and standard-library versions.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform double in [0, 1) from the top 53 bits; avoids
  // std::uniform_real_distribution which is not portable across libraries.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // Stream splitting: a substream keyed by `index` is statistically independent
  // of both the parent stream and of the order substreams are created in, so
  // per-market draws do not depend on grid iteration order.
  SplitMix64 split(std::uint64_t index) const {
    SplitMix64 mixer(state_ ^ (0x9e3779b97f4a7c15ULL * (index + 1)));
    return SplitMix64(mixer.next_u64());
  }

 private:
  std::uint64_t state_;
};

}  // namespace rationlab
