#pragma once

// Deterministic random streams. Engines are std::mt19937_64 seeded through a
// SplitMix64 derivation of (master seed, stream index); the uniform and normal
// variates are computed here so that output is identical across standard
// library implementations.

#include <qmbdp/sparse_operator.hpp>

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace qmbdp {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed of stream `index` under `master`.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  return splitmix64(splitmix64(master) ^ splitmix64(index + 0x632be59bd9b4e019ULL));
}

class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed) : engine_(seed) {}

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Standard normal by Box-Muller.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    do u1 = uniform();
    while (u1 == 0.0);
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    spare_ = radius * std::sin(2.0 * std::numbers::pi * u2);
    has_spare_ = true;
    return radius * std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Real and imaginary parts i.i.d. standard normal.
  Complex complex_normal() {
    const double re = normal();
    return {re, normal()};
  }

  StateVector complex_gaussian_vector(Eigen::Index n) {
    StateVector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = complex_normal();
    return v;
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace qmbdp
