#pragma once

#include <cstdint>
#include <string_view>

namespace bteach {

// SplitMix64 finalizer. Used to turn (seed, stream) pairs into well-mixed
// 64-bit seeds for independent std::mt19937_64 streams.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a64(std::string_view s) noexcept {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ULL;
  }
  return h;
}

// Seed for a named sub-stream: splitmix64(master ^ fnv1a64(tag)).
constexpr std::uint64_t derive_seed(std::uint64_t master, std::string_view tag) noexcept {
  return splitmix64(master ^ fnv1a64(tag));
}

// Seed for the index-th element of a stream (mask i, resample i, trial i).
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) noexcept {
  return splitmix64(splitmix64(master) + index);
}

}  // namespace bteach
