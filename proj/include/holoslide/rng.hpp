#pragma once

#include <cmath>
#include <cstdint>

namespace holoslide {

// SplitMix64 finalizer; the bit mixer behind the counter-based generator.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Counter-based splittable generator. A stream is keyed by (seed, stream id);
// every draw is a pure function of (key, counter), so parallel consumers with
// disjoint streams or counter ranges never coordinate.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0)
      : key_(fold(splitmix64(seed ^ 0x8e9c2d1f4ab35b07ull), stream)) {}

  std::uint64_t bits(std::uint64_t counter) const { return fold(key_, counter); }

  // Uniform in [0, n) via 128-bit multiply-high; bias < n / 2^64.
  std::uint64_t below(std::uint64_t counter, std::uint64_t n) const {
    return std::uint64_t((unsigned __int128)bits(counter) * n >> 64);
  }

  // Uniform in [0, 1) with 53 random bits.
  double unit(std::uint64_t counter) const {
    return double(bits(counter) >> 11) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller; consumes counters 2*counter and 2*counter+1.
  double normal(std::uint64_t counter) const {
    double u1 = unit(2 * counter);
    double u2 = unit(2 * counter + 1);
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  CounterRng split(std::uint64_t substream) const {
    CounterRng r(0);
    r.key_ = fold(key_, substream ^ 0xd6e8feb86659fd93ull);
    return r;
  }

 private:
  static std::uint64_t fold(std::uint64_t key, std::uint64_t v) {
    return splitmix64(key ^ (v + 0x9e3779b97f4a7c15ull + (key << 6) + (key >> 2)));
  }

  std::uint64_t key_;
};

// Stable stream id from a parameter name; used to seed tensors independent of
// construction order.
inline std::uint64_t stream_of(const char* name) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const char* p = name; *p; ++p) h = (h ^ std::uint8_t(*p)) * 0x100000001b3ull;
  return h;
}

}  // namespace holoslide
