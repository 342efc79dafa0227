#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace apprisk {

inline constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
inline constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

/// 64-bit FNV-1a. `basis` lets callers chain or seed hashes.
constexpr std::uint64_t fnv1a64(std::string_view data, std::uint64_t basis = kFnvOffset) {
  std::uint64_t h = basis;
  for (unsigned char c : data) {
    h ^= c;
    h *= kFnvPrime;
  }
  return h;
}

/// Fixed-width lowercase hex, e.g. for content versions.
std::string hex64(std::uint64_t v);

}  // namespace apprisk
