#pragma once

#include <cstdint>
#include <random>

namespace o3n {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Independent generator for sub-stream `stream` of a run seeded with `seed`.
inline Rng derive_rng(std::uint64_t seed, std::uint64_t stream) {
  return Rng(splitmix64(splitmix64(seed) ^ splitmix64(stream + 0x5851f42d4c957f2dULL)));
}

// Stream tags so that the different consumers of one seed never collide.
namespace streams {
inline constexpr std::uint64_t kInit = 1ULL << 40;
inline constexpr std::uint64_t kTrainQuestions = 2ULL << 40;
inline constexpr std::uint64_t kValQuestions = 3ULL << 40;
inline constexpr std::uint64_t kShuffle = 4ULL << 40;
inline constexpr std::uint64_t kDropout = 5ULL << 40;
inline constexpr std::uint64_t kClips = 6ULL << 40;
}  // namespace streams

}  // namespace o3n
