#ifndef TRACELAB_RNG_HPP
#define TRACELAB_RNG_HPP

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace tracelab {

using Engine = std::mt19937_64;

/// SplitMix64 finalizer. Bijective on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// FNV-1a over bytes; used to turn stream labels into keys.
constexpr std::uint64_t fnv1a(std::string_view s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Seed of an independent substream. The result depends only on the master
/// seed and the key path, never on the order in which substreams are requested,
/// so replications may be scheduled on any number of workers.
inline std::uint64_t substream_seed(std::uint64_t master,
                                    std::initializer_list<std::uint64_t> path) noexcept {
  std::uint64_t s = mix64(master);
  for (std::uint64_t k : path) s = mix64(s ^ mix64(k + 0x632be59bd9b4e019ULL));
  return s;
}

inline std::uint64_t stream_key(std::string_view label) noexcept { return fnv1a(label); }

inline Engine make_engine(std::uint64_t seed) noexcept {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
  return Engine(seq);
}

inline Engine make_engine(std::uint64_t master,
                          std::initializer_list<std::uint64_t> path) noexcept {
  return make_engine(substream_seed(master, path));
}

}  // namespace tracelab

#endif  // TRACELAB_RNG_HPP
