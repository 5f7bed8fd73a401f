#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace emos {

// Deterministic, platform-independent random numbers.  All stochastic code in
// the library draws through this generator so that results are reproducible
// bit-for-bit across runs, platforms and thread counts.  Parallel consumers
// derive an independent substream per logical unit of work (day, site,
// replicate, ...) instead of sharing one sequential stream.

inline std::uint64_t splitmix64_next(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Collapses (master seed, stream labels) into a fresh seed.  Labels are mixed
// in one at a time, so distinct label tuples give unrelated streams.
inline std::uint64_t substream_seed(std::uint64_t master, std::uint64_t a,
                                    std::uint64_t b = 0, std::uint64_t c = 0) {
  std::uint64_t s = master;
  std::uint64_t h = splitmix64_next(s);
  s ^= a + 0x9e3779b97f4a7c15ULL;
  h ^= splitmix64_next(s);
  s ^= b + 0xbf58476d1ce4e5b9ULL;
  h ^= splitmix64_next(s);
  s ^= c + 0x94d049bb133111ebULL;
  h ^= splitmix64_next(s);
  return h;
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() { return splitmix64_next(state_); }

  // Uniform on [0,1), 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform on (0,1); safe to feed into logs and quantile functions.
  double uniform_open() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53 + 0x1.0p-54;
  }

  // Uniform integer in [0, n).  Fixed-point multiply keeps it branch-free and
  // deterministic; the O(n/2^64) bias is irrelevant at our scales.
  std::uint64_t below(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  // Standard normal via Box-Muller (cosine branch only, so one draw consumes
  // exactly two uniforms and substreams stay aligned).
  double normal() {
    const double u1 = uniform_open();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::uint64_t state_;
};

}  // namespace emos
