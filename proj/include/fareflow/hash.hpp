#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "fareflow/rng.hpp"

namespace fareflow {

// Chained splitmix combine; order-sensitive, good avalanche. Used for tile
// ids and seed derivation, never for security.
inline std::uint64_t hash_combine(std::uint64_t h, std::uint64_t v) {
  return splitmix64(h ^ splitmix64(v ^ 0x2545f4914f6cdd1dULL));
}

inline std::uint64_t fnv1a64(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v);

// FNV-1a of a whole file, rendered as "fnv64:<hex>"; used in run manifests.
std::string hash_file(const std::string& path);

}  // namespace fareflow
