#pragma once

#include <cstdint>
#include <random>

namespace homoscale {

/// splitmix64 mixing step; used to derive independent seed streams.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Counter-based stream derivation: the same (seed, stream) pair always
/// yields the same engine, independent of draw order elsewhere.
inline std::mt19937_64 derive_rng(std::uint64_t seed, std::uint64_t stream) {
  return std::mt19937_64(mix64(mix64(seed) ^ mix64(stream + 0x632be59bd9b4e019ULL)));
}

inline std::mt19937_64 derive_rng(std::uint64_t seed, std::uint64_t stream_a,
                                  std::uint64_t stream_b) {
  return derive_rng(mix64(seed) ^ mix64(stream_a), stream_b);
}

/// Uniform double in [0, 1). Derived from the raw 64-bit output so results
/// are identical across standard library implementations.
inline double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Uniform double in [lo, hi).
inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform01(rng);
}

/// Uniform integer in [lo, hi] via rejection-free scaling (bias < 2^-53).
inline int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  const double u = uniform01(rng);
  const int span = hi - lo + 1;
  int v = lo + static_cast<int>(u * span);
  return v > hi ? hi : v;
}

}  // namespace homoscale
