#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

namespace psim {

/// The single pseudo-random engine used throughout. Every stochastic
/// routine takes an explicit seed or engine; nothing seeds from the clock.
using Rng = std::mt19937_64;

inline std::size_t uniform_index(Rng& rng, std::size_t size) {
  return std::uniform_int_distribution<std::size_t>(0, size - 1)(rng);
}

/// Derives an independent child seed from (seed, stream) with splitmix64 so
/// that per-item streams do not overlap.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace psim
