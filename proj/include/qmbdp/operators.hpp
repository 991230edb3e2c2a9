#pragma once

// Operators of the single-impurity chain
//
//   H = -sum_l [ J/2 (c+_l c_{l+1} + h.c.) + Delta n_l n_{l+1} ] + eps0 n_0,
//
// the cut Hamiltonian H0 (no hop across the 0|1 bond), the bond term
// H1 = H - H0, diagonal projectors and observables.

#include <qmbdp/error.hpp>
#include <qmbdp/fock_sector.hpp>
#include <qmbdp/sparse_operator.hpp>

#include <array>
#include <bit>
#include <cmath>
#include <complex>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace qmbdp {

struct HamiltonianParams {
  double hopping = 1.0;      ///< J, the energy unit
  double interaction = 0.0;  ///< Delta
  double impurity = 0.0;     ///< eps0, potential on site 0
  bool boundary_hop = true;  ///< false builds H0

  void validate() const {
    if (!(hopping > 0.0) || !std::isfinite(hopping)) throw ValidationError("hopping J must be positive and finite");
    if (!std::isfinite(interaction)) throw ValidationError("interaction Delta must be finite");
    if (!std::isfinite(impurity)) throw ValidationError("impurity potential eps0 must be finite");
  }
};

namespace detail {

/// Fermionic sign of c+_to c_from on `s` in Jordan-Wigner ordering along the
/// bit index: (-1)^(occupied modes strictly between the two).
inline double hop_sign(Bits s, int from, int to) {
  const int lo = std::min(from, to);
  const int hi = std::max(from, to);
  if (hi - lo <= 1) return 1.0;
  const Bits between = ((Bits{1} << hi) - 1) & ~((Bits{2} << lo) - 1);
  return (std::popcount(s & between) % 2 == 0) ? 1.0 : -1.0;
}

inline bool bit_set(Bits s, int b) { return ((s >> b) & 1U) != 0; }

}  // namespace detail

/// Sparse Hamiltonian of the chain in the given sector.
inline SparseOperator build_hamiltonian(const FockSector& sector, const HamiltonianParams& params) {
  params.validate();
  const int n = sector.n_sites();
  const int impurity_bit = sector.bit_of_site(0);
  const auto states = sector.states();

  SparseOperator::Builder builder(sector.dim(), sector.dim() * static_cast<std::size_t>(n / 2 + 2));
  for (std::size_t i = 0; i < states.size(); ++i) {
    const Bits s = states[i];
    double diag = 0.0;
    for (int b = 0; b + 1 < n; ++b) {
      const bool here = detail::bit_set(s, b);
      const bool next = detail::bit_set(s, b + 1);
      if (here && next) diag -= params.interaction;
      if (here == next) continue;
      if (!params.boundary_hop && b == impurity_bit) continue;
      const int from = here ? b : b + 1;
      const int to = here ? b + 1 : b;
      const Bits t = s ^ (Bits{1} << b) ^ (Bits{1} << (b + 1));
      builder.add(sector.index_of(t), -0.5 * params.hopping * detail::hop_sign(s, from, to));
    }
    if (detail::bit_set(s, impurity_bit)) diag += params.impurity;
    builder.add(i, diag);
    builder.finish_row();
  }
  return std::move(builder).finish(true);
}

/// The hop across the bond between sites 0 and 1.
inline SparseOperator build_h1(const FockSector& sector, const HamiltonianParams& params) {
  HamiltonianParams full = params;
  full.boundary_hop = true;
  HamiltonianParams cut = params;
  cut.boundary_hop = false;
  return difference(build_hamiltonian(sector, full), build_hamiltonian(sector, cut));
}

/// The same chain written as a spin-1/2 XXZ operator,
///   -J/4 (sx sx + sy sy) - Delta/4 (1 + sz)(1 + sz) + eps0 (1 + sz_0)/2,
/// evaluated with Pauli algebra on the bitstrings (bit set = spin up).
inline SparseOperator build_spin_equivalent(const FockSector& sector, const HamiltonianParams& params) {
  params.validate();
  const int n = sector.n_sites();
  const int impurity_bit = sector.bit_of_site(0);
  const auto states = sector.states();
  const Complex i_unit{0.0, 1.0};

  // Pauli action on one spin: returns the flipped bit and the amplitude.
  auto sigma_x = [](bool) { return Complex{1.0, 0.0}; };
  auto sigma_y = [&](bool up) { return up ? -i_unit : i_unit; };
  auto sigma_z = [](bool up) { return up ? 1.0 : -1.0; };

  SparseOperator::Builder builder(sector.dim(), sector.dim() * static_cast<std::size_t>(n / 2 + 2));
  for (std::size_t i = 0; i < states.size(); ++i) {
    const Bits s = states[i];
    double diag = 0.0;
    for (int b = 0; b + 1 < n; ++b) {
      const bool up0 = detail::bit_set(s, b);
      const bool up1 = detail::bit_set(s, b + 1);
      const double z0 = sigma_z(up0);
      const double z1 = sigma_z(up1);
      diag -= 0.25 * params.interaction * (1.0 + z0 + z1 + z0 * z1);
      if (!params.boundary_hop && b == impurity_bit) continue;
      const Complex flip = sigma_x(up0) * sigma_x(up1) + sigma_y(up0) * sigma_y(up1);
      if (std::abs(flip) == 0.0) continue;
      const Bits t = s ^ (Bits{1} << b) ^ (Bits{1} << (b + 1));
      // sx sx + sy sy conserves magnetisation, so t is in the sector.
      builder.add(sector.index_of(t), -0.25 * params.hopping * flip.real());
    }
    diag += 0.5 * params.impurity * (1.0 + sigma_z(detail::bit_set(s, impurity_bit)));
    builder.add(i, diag);
    builder.finish_row();
  }
  return std::move(builder).finish(true);
}

/// 0/1 diagonal operator over a sector.
class DiagonalMask {
 public:
  DiagonalMask() = default;
  explicit DiagonalMask(std::vector<std::uint8_t> values) : values_(std::move(values)) {
    for (auto v : values_) count_ += v != 0 ? 1 : 0;
  }

  static DiagonalMask identity(std::size_t dim) { return DiagonalMask(std::vector<std::uint8_t>(dim, 1)); }

  [[nodiscard]] std::size_t dim() const noexcept { return values_.size(); }
  /// Dimension of the subspace the mask projects onto.
  [[nodiscard]] std::size_t rank() const noexcept { return count_; }
  [[nodiscard]] bool operator[](std::size_t i) const { return values_[i] != 0; }
  [[nodiscard]] std::span<const std::uint8_t> values() const noexcept { return values_; }

  [[nodiscard]] DiagonalMask complement() const {
    std::vector<std::uint8_t> out(values_.size());
    for (std::size_t i = 0; i < values_.size(); ++i) out[i] = values_[i] != 0 ? 0 : 1;
    return DiagonalMask(std::move(out));
  }

  /// psi <- mask * psi.
  void project(StateVector& psi) const {
    check(psi);
    for (std::size_t i = 0; i < values_.size(); ++i)
      if (values_[i] == 0) psi[static_cast<Eigen::Index>(i)] = 0.0;
  }

  /// <psi| mask |psi>.
  [[nodiscard]] double weight(const StateVector& psi) const {
    check(psi);
    double w = 0.0;
    for (std::size_t i = 0; i < values_.size(); ++i)
      if (values_[i] != 0) w += std::norm(psi[static_cast<Eigen::Index>(i)]);
    return w;
  }

 private:
  void check(const StateVector& psi) const {
    if (static_cast<std::size_t>(psi.size()) != values_.size())
      throw ValidationError("dimension mismatch: mask " + std::to_string(values_.size()) + ", vector " +
                            std::to_string(psi.size()));
  }

  std::vector<std::uint8_t> values_;
  std::size_t count_ = 0;
};

/// Projector onto states in which every listed site is occupied. For sites
/// (p, q) this is n_p n_q; the empty list gives the identity.
inline DiagonalMask projector_mask(const FockSector& sector, std::span<const int> sites) {
  Bits required = 0;
  for (int site : sites) required |= Bits{1} << sector.bit_of_site(site);
  std::vector<std::uint8_t> values(sector.dim());
  const auto states = sector.states();
  for (std::size_t i = 0; i < states.size(); ++i) values[i] = (states[i] & required) == required ? 1 : 0;
  return DiagonalMask(std::move(values));
}

inline DiagonalMask projector_mask(const FockSector& sector, std::initializer_list<int> sites) {
  return projector_mask(sector, std::span<const int>(sites.begin(), sites.size()));
}

/// Diagonal observables in the occupation basis.
struct Observable {
  enum class Kind { SiteOccupation, RightHalfCount, PairOccupation };
  Kind kind = Kind::RightHalfCount;
  int site = 0;
  int other_site = 0;

  static Observable site_occupation(int site) { return {Kind::SiteOccupation, site, 0}; }
  static Observable right_half_count() { return {Kind::RightHalfCount, 0, 0}; }
  static Observable pair_occupation(int p, int q) { return {Kind::PairOccupation, p, q}; }

  [[nodiscard]] std::string name() const {
    switch (kind) {
      case Kind::SiteOccupation:
        return "n_" + std::to_string(site);
      case Kind::RightHalfCount:
        return "N_R";
      case Kind::PairOccupation:
        return "n_" + std::to_string(site) + "*n_" + std::to_string(other_site);
    }
    return {};
  }
};

inline std::vector<double> observable_diag(const FockSector& sector, const Observable& obs) {
  std::vector<double> out(sector.dim());
  const auto states = sector.states();
  switch (obs.kind) {
    case Observable::Kind::SiteOccupation: {
      const int b = sector.bit_of_site(obs.site);
      for (std::size_t i = 0; i < states.size(); ++i) out[i] = detail::bit_set(states[i], b) ? 1.0 : 0.0;
      break;
    }
    case Observable::Kind::RightHalfCount:
      for (std::size_t i = 0; i < states.size(); ++i) out[i] = sector.right_count(states[i]);
      break;
    case Observable::Kind::PairOccupation: {
      const int b0 = sector.bit_of_site(obs.site);
      const int b1 = sector.bit_of_site(obs.other_site);
      for (std::size_t i = 0; i < states.size(); ++i)
        out[i] = detail::bit_set(states[i], b0) && detail::bit_set(states[i], b1) ? 1.0 : 0.0;
      break;
    }
  }
  return out;
}

/// sum_i diag[i] |psi_i|^2.
inline double expectation(std::span<const double> diag, const StateVector& psi) {
  if (diag.size() != static_cast<std::size_t>(psi.size()))
    throw ValidationError("dimension mismatch in expectation value");
  double acc = 0.0;
  for (std::size_t i = 0; i < diag.size(); ++i) acc += diag[i] * std::norm(psi[static_cast<Eigen::Index>(i)]);
  return acc;
}

}  // namespace qmbdp
