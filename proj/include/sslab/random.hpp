#pragma once

#include <cstdint>
#include <random>

namespace sslab {

// splitmix64; used to derive independent, reproducible seed streams.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag) {
  return splitmix64(base ^ splitmix64(tag));
}

/// Independent child generator for item `index` under a master seed.
/// The stream depends only on (master, index), not on draw order, so
/// per-item work may run in any order or concurrently.
inline std::mt19937_64 child_rng(std::uint64_t master, std::uint64_t index) {
  return std::mt19937_64(derive_seed(master, index));
}

}  // namespace sslab
