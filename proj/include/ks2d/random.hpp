#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace ks2d {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Expands a master seed into an independent per-purpose seed:
/// splitmix64(master ^ fnv1a64(purpose)). Purposes in use are "ic", "grid",
/// "perturb" and "jitter", optionally suffixed (e.g. "grid/3").
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view purpose) {
  return splitmix64(master ^ fnv1a64(purpose));
}

/// Uniform draw on the open interval (lo, hi) from the raw generator output,
/// independent of the standard library's distribution implementation.
inline double uniform_open(Rng& rng, double lo, double hi) {
  // 53 random bits mapped to (0,1): (n + 0.5) / 2^53
  const double u = (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
  return lo + (hi - lo) * u;
}

}  // namespace ks2d
