#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace gstz {

// splitmix64: cheap stateless mixer used to derive independent seeds and as
// the core of the counter-based noise streams below.
inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline uint64_t derive_seed(uint64_t master, uint64_t stream) {
  return splitmix64(master ^ splitmix64(stream + 0x51ed270b0a9cd1f3ULL));
}

// Counter-based Gaussian stream: sample k of stream (seed) is a pure function
// of (seed, k), so parallel consumers stay bit-identical regardless of worker
// count or evaluation order.
class CounterRng {
 public:
  explicit CounterRng(uint64_t seed) : seed_(seed) {}

  double uniform(uint64_t k) const {
    // 53-bit mantissa in [0, 1)
    return static_cast<double>(splitmix64(seed_ + k * 0x9e3779b97f4a7c15ULL) >> 11) *
           0x1.0p-53;
  }

  // Box-Muller on two decorrelated counters; strictly positive u1 avoids log(0).
  double normal(uint64_t k) const {
    const double u1 = uniform(2 * k) + 0x1.0p-54;
    const double u2 = uniform(2 * k + 1);
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  uint64_t seed_;
};

}  // namespace gstz
