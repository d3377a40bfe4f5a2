#pragma once

#include <cstdint>

namespace gridanneal::detail {

// splitmix64: tiny, fully specified, platform-independent generator used for
// per-read seed derivation and the Metropolis chains. Raw 64-bit outputs are
// mapped to uniforms manually so results never depend on the standard
// library's distribution implementations.
struct SplitMix64 {
  std::uint64_t state;

  explicit SplitMix64(std::uint64_t s) : state(s) {}

  std::uint64_t next() {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  double u01() { return (next() >> 11) * 0x1.0p-53; }

  std::uint32_t below(std::uint32_t n) {
    return static_cast<std::uint32_t>((next() >> 32) * n >> 32);
  }
};

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  SplitMix64 mix(master ^ (0xD1B54A32D192ED03ull * (stream + 1)));
  mix.next();
  return mix.next();
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a,
                                 std::uint64_t b) {
  return derive_seed(derive_seed(master, a), b);
}

}  // namespace gridanneal::detail
