#ifndef BPNP_RNG_H_
#define BPNP_RNG_H_

#include <cstdint>
#include <random>
#include <string_view>

namespace bpnp {

// splitmix64 finalizer.
constexpr uint64_t MixBits(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr uint64_t StreamSeed(uint64_t seed, uint64_t stream) {
  return MixBits(MixBits(seed) ^ MixBits(stream + 0x632be59bd9b4e019ULL));
}

// FNV-1a of the label, so each subsystem owns a fixed stream.
constexpr uint64_t StreamSeed(uint64_t seed, std::string_view label) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (const char c : label) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return StreamSeed(seed, h);
}

inline std::mt19937_64 MakeRng(uint64_t seed, std::string_view label) {
  return std::mt19937_64(StreamSeed(seed, label));
}

}  // namespace bpnp

#endif  // BPNP_RNG_H_
