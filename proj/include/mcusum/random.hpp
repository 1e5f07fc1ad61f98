#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace mcusum {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Hashes a master seed together with a path of indices into a stream seed.
/// Streams derived from distinct paths are statistically independent, so a
/// result that depends only on (seed, path) is independent of scheduling.
inline std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
  std::uint64_t h = splitmix64(seed);
  for (std::uint64_t p : path) h = splitmix64(h ^ splitmix64(p + 0x632be59bd9b4e019ULL));
  return h;
}

inline Rng derive_stream(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
  return Rng(derive_seed(seed, path));
}

// Stream purpose tags; keep distinct so that no two consumers share a stream.
namespace stream_tag {
inline constexpr std::uint64_t kDrift = 1;
inline constexpr std::uint64_t kKlNumber = 2;
inline constexpr std::uint64_t kGradient = 3;
inline constexpr std::uint64_t kReport = 4;
inline constexpr std::uint64_t kTrialPreChange = 5;
inline constexpr std::uint64_t kTrialPostChange = 6;
inline constexpr std::uint64_t kWorstDrift = 7;
}  // namespace stream_tag

}  // namespace mcusum
