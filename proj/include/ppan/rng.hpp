#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>
#include <utility>
#include <vector>

namespace ppan {

using Rng = std::mt19937_64;

/// SplitMix64 finaliser; used to decorrelate derived seeds.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Seed for the named substream of an experiment seed. Distinct names give
/// independent generators, so e.g. weight init never shifts the noise draws.
constexpr std::uint64_t substream_seed(std::uint64_t experiment_seed, std::string_view name) {
  return mix64(mix64(experiment_seed) ^ fnv1a(name));
}

inline Rng make_substream(std::uint64_t experiment_seed, std::string_view name) {
  return Rng(substream_seed(experiment_seed, name));
}

// std::uniform_real_distribution / normal_distribution are implementation
// defined; these are fixed so outputs are reproducible across toolchains.

/// Uniform draw in [0, 1) from the top 53 bits.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Standard normal via Marsaglia's polar method (no cached second value).
inline double standard_normal(Rng& rng) {
  for (;;) {
    const double u = 2.0 * uniform01(rng) - 1.0;
    const double v = 2.0 * uniform01(rng) - 1.0;
    const double s = u * u + v * v;
    if (s > 0.0 && s < 1.0) return u * std::sqrt(-2.0 * std::log(s) / s);
  }
}

/// Exponential(1).
inline double standard_exponential(Rng& rng) {
  return -std::log1p(-uniform01(rng));
}

/// Deterministic Fisher-Yates shuffle (std::shuffle's draw pattern is unspecified).
template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace ppan
