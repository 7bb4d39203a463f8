#pragma once

#include <cstdint>
#include <random>

namespace ufcal {

using Engine = std::mt19937_64;

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Seed of the substream `stream` (optionally `substream`) under `seed`.
/// Depends only on its arguments, so concurrent consumers cannot perturb
/// each other.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream,
                                    std::uint64_t substream = 0) {
  return mix64(mix64(mix64(seed) ^ stream) ^ (substream * 0xd1b54a32d192ed03ULL));
}

inline Engine make_engine(std::uint64_t seed, std::uint64_t stream = 0,
                          std::uint64_t substream = 0) {
  const std::uint64_t s = derive_seed(seed, stream, substream);
  std::seed_seq seq{static_cast<std::uint32_t>(s), static_cast<std::uint32_t>(s >> 32)};
  return Engine(seq);
}

}  // namespace ufcal
