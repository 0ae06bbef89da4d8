#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace gripstab {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Substream seed from a base seed and a path of indices, so work items can be
// generated in any order and still agree bit-for-bit.
inline std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> path) {
  std::uint64_t s = splitmix64(base);
  for (auto p : path) s = splitmix64(s ^ splitmix64(p + 0x632be59bd9b4e019ULL));
  return s;
}

// Purpose tags for derive_seed paths.
enum class Stream : std::uint64_t {
  kForceNoise = 1,
  kPixelNoiseLeft = 2,
  kPixelNoiseRight = 3,
  kTexture = 4,
  kGrid = 5,
  kInit = 6,
  kShuffle = 7,
  kDropout = 8,
  kFolds = 9,
};

inline std::uint64_t tag(Stream s) { return static_cast<std::uint64_t>(s); }

}  // namespace gripstab
