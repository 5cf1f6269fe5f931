#pragma once

#include <cstdint>
#include <random>

namespace regpca {

using Engine = std::mt19937_64;

/// Mixes (seed, stream) into an independent 64-bit seed (splitmix64 finalizer
/// applied twice). Stream derivation is counter-based so that the value for a
/// given stream never depends on how many other streams were consumed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

inline Engine make_engine(std::uint64_t seed, std::uint64_t stream) {
  return Engine(derive_seed(seed, stream));
}

}  // namespace regpca
