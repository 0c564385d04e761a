#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace qcpd {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer; a bijective 64-bit mixer.
std::uint64_t mix64(std::uint64_t x) noexcept;

/// Derives a substream key from a root seed and an ordered list of indices.
/// Substreams for different index tuples are statistically independent, and
/// the key depends only on its arguments, never on scheduling.
std::uint64_t substream_key(std::uint64_t seed,
                            std::initializer_list<std::uint64_t> path) noexcept;

/// Stable 64-bit FNV-1a hash, used to tag substreams by name.
std::uint64_t hash_name(std::string_view name) noexcept;

inline Rng make_rng(std::uint64_t seed,
                    std::initializer_list<std::uint64_t> path) {
  return Rng(substream_key(seed, path));
}

}  // namespace qcpd
