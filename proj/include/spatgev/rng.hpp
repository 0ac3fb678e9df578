// rng.hpp
// Seeded random number generation. All samplers in the library take an
// explicit 64-bit seed and own their generator state, so parallel and
// serial runs agree as long as per-task seeds are derived deterministically.

#ifndef SPATGEV_RNG_HPP
#define SPATGEV_RNG_HPP

#include <cstdint>
#include <random>

namespace spatgev {

// splitmix64 finalizer; mixes a master seed with a stream index so that
// derived streams are decorrelated.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  std::uint64_t z = master + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::mt19937_64 make_rng(std::uint64_t seed) {
  return std::mt19937_64(seed);
}

// Uniform draw on the open interval (0, 1).
inline double uniform_open(std::mt19937_64& rng) {
  // 53-bit mantissa, offset by half an ulp so 0 and 1 are excluded.
  return (static_cast<double>(rng() >> 11) + 0.5) * 0x1p-53;
}

inline double standard_normal(std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  return dist(rng);
}

}  // namespace spatgev

#endif  // SPATGEV_RNG_HPP
