#pragma once

#include <cstdint>
#include <random>

namespace hdmcts {

// Seed derivation. std::mt19937_64 output is fixed by the standard, but the
// standard distributions are not, so sampling goes through unit_real().

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) noexcept {
  return splitmix64(a ^ splitmix64(b + 0x632be59bd9b4e019ULL));
}

using Rng = std::mt19937_64;

/// Uniform in [0, 1) with 53 bits of resolution.
inline double unit_real(Rng &rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Maps a 64-bit word to [0, 1).
constexpr double unit_from_bits(std::uint64_t bits) noexcept {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

}  // namespace hdmcts
