#pragma once

#include <cstdint>
#include <random>

namespace sop {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer (Steele, Lea, Flood 2014).
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Independent child seed for `stream` under `master`.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  return splitmix64(splitmix64(master) ^ splitmix64(stream + 0x632be59bd9b4e019ULL));
}

/// Uniform double in [0, 1) from the top 53 bits of a SplitMix64 draw.
constexpr double unit_from_seed(std::uint64_t seed) {
  return static_cast<double>(splitmix64(seed) >> 11) * 0x1.0p-53;
}

// Named seed streams used by the harness.
inline constexpr std::uint64_t kEnvStream = 1;
inline constexpr std::uint64_t kAgentStream = 2;
inline constexpr std::uint64_t kSamplerStream = 3;
inline constexpr std::uint64_t kEvalStream = 4;

}  // namespace sop
