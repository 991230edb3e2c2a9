#pragma once

// Bessel functions of the first kind of integer order by Miller's downward
// recurrence, normalised with J_0 + 2 sum_k J_2k = 1.

#include <qmbdp/error.hpp>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace qmbdp {

/// J_0(x) ... J_kmax(x) in one downward sweep.
inline std::vector<double> bessel_j_sequence(int kmax, double x) {
  if (kmax < 0) throw ValidationError("Bessel order must be nonnegative, got " + std::to_string(kmax));
  if (!std::isfinite(x)) throw ValidationError("Bessel argument must be finite");
  std::vector<double> out(static_cast<std::size_t>(kmax) + 1, 0.0);
  const double ax = std::abs(x);
  if (ax == 0.0) {
    out[0] = 1.0;
    return out;
  }

  // Past the turning point k ~ x the minimal solution decays like an Airy
  // function on the scale x^(1/3); 15 such scales leave it far below 1e-16.
  int start = static_cast<int>(std::max<double>(kmax, ax) + 30.0 + 15.0 * std::cbrt(ax));
  start += start % 2;

  constexpr double kBig = 1e250;
  std::vector<double> j(static_cast<std::size_t>(start) + 2, 0.0);
  j[static_cast<std::size_t>(start)] = 1e-280;
  for (int k = start; k >= 1; --k) {
    const auto uk = static_cast<std::size_t>(k);
    j[uk - 1] = (2.0 * k / ax) * j[uk] - j[uk + 1];
    if (std::abs(j[uk - 1]) > kBig) {
      for (std::size_t i = uk - 1; i <= static_cast<std::size_t>(start); ++i) j[i] /= kBig;
    }
  }

  double norm = j[0];
  for (std::size_t k = 2; k <= static_cast<std::size_t>(start); k += 2) norm += 2.0 * j[k];

  for (int k = 0; k <= kmax; ++k) {
    double v = j[static_cast<std::size_t>(k)] / norm;
    if (x < 0.0 && k % 2 == 1) v = -v;
    out[static_cast<std::size_t>(k)] = v;
  }
  return out;
}

inline double bessel_j(int k, double x) { return bessel_j_sequence(k, x).back(); }

}  // namespace qmbdp
