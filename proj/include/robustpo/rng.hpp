#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace robustpo {

using Rng = std::mt19937_64;

// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Seed-splitting rule used everywhere a sub-stream is needed: the parent seed
/// is folded with each path component in order. Streams with different paths
/// are statistically independent; identical paths give identical seeds.
inline std::uint64_t derive_seed(std::uint64_t parent, std::initializer_list<std::uint64_t> path) {
  std::uint64_t s = mix64(parent);
  for (auto p : path) s = mix64(s ^ mix64(p + 0x632be59bd9b4e019ULL));
  return s;
}

// Stream tags for derive_seed paths.
namespace stream {
inline constexpr std::uint64_t kPerformance = 1;
inline constexpr std::uint64_t kDelayProbe = 2;
inline constexpr std::uint64_t kGainProbe = 3;
inline constexpr std::uint64_t kAcquisition = 4;
inline constexpr std::uint64_t kHyperFit = 5;
inline constexpr std::uint64_t kDesign = 6;
inline constexpr std::uint64_t kInitialState = 7;
inline constexpr std::uint64_t kSensor = 8;
inline constexpr std::uint64_t kActuation = 9;
inline constexpr std::uint64_t kTest = 10;
inline constexpr std::uint64_t kVerify = 11;
}  // namespace stream

}  // namespace robustpo
