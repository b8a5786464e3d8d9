#pragma once

#include <cstdint>
#include <random>

namespace amrt {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Engine for a (seed, stream) pair; distinct streams are decorrelated.
inline std::mt19937_64 make_engine(std::uint64_t seed, std::uint64_t stream = 0) {
  return std::mt19937_64(splitmix64(seed ^ splitmix64(stream + 0x51ed2701ULL)));
}

// Uniform in [0, 1) from the top 53 bits; identical across standard libraries,
// unlike std::uniform_real_distribution.
inline double uniform01(std::mt19937_64& engine) {
  return static_cast<double>(engine() >> 11) * 0x1.0p-53;
}

inline double uniform(std::mt19937_64& engine, double lo, double hi) {
  return lo + (hi - lo) * uniform01(engine);
}

}  // namespace amrt
