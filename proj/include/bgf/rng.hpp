#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace bgf {

// Seeded random stream: mt19937_64 keyed through SplitMix64 so that
// (master seed, stream id) pairs give decorrelated streams. Normal draws
// use Box-Muller on explicit uniforms instead of std::normal_distribution,
// whose output is implementation-defined.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : gen_(scramble(seed)) {}

  static RngStream substream(std::uint64_t master, std::uint64_t id) {
    return RngStream(scramble(master ^ (0x9e3779b97f4a7c15ULL + id * 0xbf58476d1ce4e5b9ULL)));
  }

  std::uint64_t next_u64() { return gen_(); }

  // uniform on [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal() {
    double u1;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
  }

 private:
  static std::uint64_t scramble(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

  std::mt19937_64 gen_;
};

}  // namespace bgf
