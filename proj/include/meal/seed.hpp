#pragma once

#include <cstdint>
#include <string_view>

namespace meal {

/// Independent 64-bit seed for a named stream of a run (splitmix64 over an
/// FNV-1a hash of the stream name). Changing one stream never shifts another.
[[nodiscard]] constexpr std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream,
                                                  std::uint64_t index = 0) {
  std::uint64_t h = 1469598103934665603ULL;
  for (char c : stream) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  std::uint64_t z = seed ^ (h + 0x9e3779b97f4a7c15ULL + (index << 17) + index);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace meal
