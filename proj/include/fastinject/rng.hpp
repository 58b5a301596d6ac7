#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace fastinject {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// FNV-1a, used to turn stream names into seed tags.
constexpr std::uint64_t hash_tag(std::string_view tag) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Independent sub-stream seeds: every consumer of randomness owns a stream
// derived from (base seed, tag, index) so that adding or removing one consumer
// never shifts the draws seen by another.
inline std::uint64_t derive_seed(std::uint64_t base, std::string_view tag,
                                 std::uint64_t index = 0) {
  return splitmix64(splitmix64(base ^ hash_tag(tag)) + index);
}

inline Rng make_rng(std::uint64_t base, std::string_view tag,
                    std::uint64_t index = 0) {
  return Rng(derive_seed(base, tag, index));
}

}  // namespace fastinject
