#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace forge {

// Stable 64-bit FNV-1a. std::hash is not stable across implementations, and
// stream ids must be.
constexpr std::uint64_t fnv1a(std::string_view text,
                              std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Per-call RNG stream derived from (global seed, purpose, example id). Never
// depends on scheduling order, so parallel maps stay deterministic.
inline std::uint64_t derive_stream(std::uint64_t global_seed,
                                   std::string_view purpose,
                                   std::string_view example_id) {
  std::uint64_t h = fnv1a(purpose, splitmix64(global_seed));
  h = fnv1a("\x1f", h);
  h = fnv1a(example_id, h);
  return splitmix64(h);
}

// Uniform double in [0, 1) from 53 random bits. std::uniform_real_distribution
// is implementation-defined; this is not.
inline double uniform01(std::mt19937_64& gen) {
  return static_cast<double>(gen() >> 11) * 0x1.0p-53;
}

}  // namespace forge
