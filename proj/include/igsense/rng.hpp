#pragma once

// Counter-based random number generation. Every draw is addressed by
// (seed, stream, index) through a SplitMix64 mix, so sample k of stream s is
// the same no matter which thread asks for it or in what order. Normals come
// from a Box-Muller transform of two such uniforms.

#include <cmath>
#include <cstdint>

#include "igsense/core.hpp"

namespace igsense {
namespace rng {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t mix3(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  return splitmix64(splitmix64(splitmix64(seed) ^ stream) ^ index);
}

// Uniform on (0, 1): the top 53 bits of the mix, offset so 0 is never drawn.
inline double uniform01(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  const std::uint64_t bits = mix3(seed, stream, index) >> 11;
  return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
}

inline double uniform(std::uint64_t seed, std::uint64_t stream, std::uint64_t index, double a,
                      double b) {
  return a + (b - a) * uniform01(seed, stream, index);
}

// Standard normal via Box-Muller; draw `index` consumes uniforms 2*index and
// 2*index + 1 of the stream.
inline double normal(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  const double u1 = uniform01(seed, stream, 2 * index);
  const double u2 = uniform01(seed, stream, 2 * index + 1);
  constexpr double two_pi = 6.283185307179586476925286766559;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
}

inline Mat gaussian_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed,
                           std::uint64_t stream) {
  Mat g(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i)
      g(i, j) = normal(seed, stream, static_cast<std::uint64_t>(j) * rows + i);
  return g;
}

inline Vec gaussian_vector(Eigen::Index n, std::uint64_t seed, std::uint64_t stream) {
  Vec g(n);
  for (Eigen::Index i = 0; i < n; ++i) g(i) = normal(seed, stream, i);
  return g;
}

// Sequential convenience wrapper around a (seed, stream) address.
class Stream {
 public:
  Stream(std::uint64_t seed, std::uint64_t stream) : seed_(seed), stream_(stream) {}

  double next_uniform() { return uniform01(seed_, stream_, counter_++); }
  double next_uniform(double a, double b) { return uniform(seed_, stream_, counter_++, a, b); }
  double next_normal() { return normal(seed_, stream_, counter_++); }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t counter_ = 0;
};

}  // namespace rng
}  // namespace igsense
