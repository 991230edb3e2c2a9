#pragma once

// Dense spectra of the cut Hamiltonian H0 in fixed-N_R blocks, the van Vleck
// gap parameter g_alpha, and energy-filtered random initial states.

#include <qmbdp/error.hpp>
#include <qmbdp/fock_sector.hpp>
#include <qmbdp/random.hpp>
#include <qmbdp/sparse_operator.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <variant>
#include <vector>

namespace qmbdp {

inline constexpr std::size_t kSectorDenseCap = 10000;

/// Eigensystem of H0 restricted to the states with N_R = right_count.
struct SectorEigensystem {
  int right_count = 0;
  std::size_t full_dim = 0;
  std::vector<std::size_t> basis;  // indices into the full sector
  Eigen::VectorXd energies;        // ascending
  std::vector<long double> relative;  // energies - reference, Rayleigh-refined
  long double reference = 0.0;        // mean diagonal of H0 over the full sector
  Eigen::MatrixXd vectors;         // columns, in the sub-basis

  [[nodiscard]] std::size_t dim() const noexcept { return basis.size(); }

  /// Column `k` placed into the full sector.
  [[nodiscard]] StateVector embed(Eigen::Index k) const { return embed_coefficients(vectors.col(k).cast<Complex>()); }

  [[nodiscard]] StateVector embed_coefficients(const StateVector& sub) const {
    StateVector full = StateVector::Zero(static_cast<Eigen::Index>(full_dim));
    for (std::size_t i = 0; i < basis.size(); ++i) full[static_cast<Eigen::Index>(basis[i])] = sub[static_cast<Eigen::Index>(i)];
    return full;
  }

  [[nodiscard]] StateVector restrict(const StateVector& full) const {
    StateVector sub(static_cast<Eigen::Index>(basis.size()));
    for (std::size_t i = 0; i < basis.size(); ++i) sub[static_cast<Eigen::Index>(i)] = full[static_cast<Eigen::Index>(basis[i])];
    return sub;
  }
};

inline SectorEigensystem diagonalize_sector(const SparseOperator& h0, const RightCountMask& mask, int r,
                                            std::size_t max_dim = kSectorDenseCap) {
  if (mask.dim() != h0.dim()) throw ValidationError("right-count mask and operator dimensions differ");
  SectorEigensystem sys;
  sys.right_count = r;
  sys.full_dim = h0.dim();
  sys.basis = mask.indices(r);
  const auto d = static_cast<Eigen::Index>(sys.basis.size());
  if (d == 0) throw ValidationError("no states with N_R = " + std::to_string(r));
  if (sys.basis.size() > max_dim)
    throw CapacityError("sector-spectra", "N_R = " + std::to_string(r) + " block has dimension " +
                                              std::to_string(d) + ", above the dense cap " + std::to_string(max_dim));

  std::vector<Eigen::Index> position(h0.dim(), -1);
  for (Eigen::Index i = 0; i < d; ++i) position[sys.basis[static_cast<std::size_t>(i)]] = i;

  Eigen::MatrixXd block = Eigen::MatrixXd::Zero(d, d);
  struct Link {
    Eigen::Index row, col;
    double value;
  };
  std::vector<Link> links;
  const auto offsets = h0.row_offsets();
  const auto cols = h0.columns();
  const auto vals = h0.values();
  for (Eigen::Index i = 0; i < d; ++i) {
    const std::size_t row = sys.basis[static_cast<std::size_t>(i)];
    for (auto k = static_cast<std::size_t>(offsets[row]); k < static_cast<std::size_t>(offsets[row + 1]); ++k) {
      const Eigen::Index j = position[static_cast<std::size_t>(cols[k])];
      if (j < 0) {
        if (vals[k] != 0.0)
          throw ValidationError("operator couples N_R = " + std::to_string(r) + " to another block; pass H0");
        continue;
      }
      block(i, j) = vals[k];
      if (j != i) links.push_back({i, j, vals[k]});
    }
  }
  // Energies are kept relative to a shift-covariant reference and refined in
  // extended precision, so differences between blocks (vvpt_gap denominators)
  // do not depend on a constant offset in H0.
  long double trace = 0.0L;
  for (std::size_t row = 0; row < h0.dim(); ++row) trace += h0.diagonal(row);
  sys.reference = trace / static_cast<long double>(h0.dim());
  Eigen::MatrixXd shifted = block;
  shifted.diagonal().array() -= static_cast<double>(sys.reference);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(shifted);
  if (solver.info() != Eigen::Success) throw NumericalError("dense eigensolver failed");
  const Eigen::MatrixXd& v = solver.eigenvectors();
  sys.relative.resize(static_cast<std::size_t>(d));
  sys.energies.resize(d);
  for (Eigen::Index k = 0; k < d; ++k) {
    long double num = 0.0L, den = 0.0L;
    for (Eigen::Index i = 0; i < d; ++i) {
      const long double vi = v(i, k);
      num += (static_cast<long double>(block(i, i)) - sys.reference) * vi * vi;
      den += vi * vi;
    }
    for (const Link& l : links) num += static_cast<long double>(l.value) * v(l.row, k) * v(l.col, k);
    sys.relative[static_cast<std::size_t>(k)] = num / den;
    sys.energies[k] = static_cast<double>(sys.relative[static_cast<std::size_t>(k)] + sys.reference);
  }
  sys.vectors = solver.eigenvectors();
  return sys;
}

struct GapEntry {
  int alpha = 0;
  double energy = 0.0;
  double gap = 0.0;  ///< g_alpha; +inf when flagged
  bool flagged = false;
};

/// g_alpha for alpha = 0 (the N_R = 0 configuration) and alpha >= 1 (N_R = 1
/// eigenstates, ascending energy).
struct VvptGapTable {
  std::vector<GapEntry> entries;
  std::size_t q0_dim = 0;  ///< D_Q0 = 1 + dim(N_R = 1)
  int alpha_mid = 0;       ///< ceil(D_Q0 / 2)

  [[nodiscard]] const GapEntry& at(int alpha) const { return entries.at(static_cast<std::size_t>(alpha)); }
};

struct GapThresholds {
  double degeneracy = 1e-10;  ///< |E_alpha - E_nu| below this counts as degenerate (units of J)
  double coupling = 1e-12;    ///< couplings below this are treated as zero
};

inline int mid_alpha(std::size_t q0_dim) { return static_cast<int>((q0_dim + 1) / 2); }

/// g_alpha = max_nu |<E_alpha|H1|E_nu>| / |E_alpha - E_nu| with nu over the
/// N_R = 2 block.
inline VvptGapTable vvpt_gap(const SectorEigensystem& empty_right, const SectorEigensystem& q_sys,
                             const SectorEigensystem& p_sys, const SparseOperator& h1,
                             const GapThresholds& thresholds = {}) {
  if (empty_right.right_count != 0 || q_sys.right_count != 1 || p_sys.right_count != 2)
    throw ValidationError("vvpt_gap expects the N_R = 0, 1 and 2 eigensystems");
  if (empty_right.full_dim != h1.dim() || q_sys.full_dim != h1.dim() || p_sys.full_dim != h1.dim())
    throw ValidationError("eigensystems and H1 live in different sectors");

  VvptGapTable table;
  table.q0_dim = empty_right.dim() + q_sys.dim();
  table.alpha_mid = mid_alpha(table.q0_dim);

  const bool common_reference = empty_right.reference == p_sys.reference && q_sys.reference == p_sys.reference &&
                                empty_right.relative.size() == empty_right.dim() &&
                                q_sys.relative.size() == q_sys.dim() && p_sys.relative.size() == p_sys.dim();
  auto level = [&](const SectorEigensystem& sys, Eigen::Index k) -> long double {
    return common_reference ? sys.relative[static_cast<std::size_t>(k)] : static_cast<long double>(sys.energies[k]);
  };

  auto gap_of = [&](const StateVector& state, double energy, long double own, int alpha) {
    StateVector coupled;
    h1.apply(state, coupled);
    const StateVector coupling = p_sys.vectors.transpose().cast<Complex>() * p_sys.restrict(coupled);
    GapEntry entry{alpha, energy, 0.0, false};
    for (Eigen::Index nu = 0; nu < coupling.size(); ++nu) {
      const double numerator = std::abs(coupling[nu]);
      if (numerator < thresholds.coupling) continue;
      const auto denominator = static_cast<double>(std::abs(own - level(p_sys, nu)));
      if (denominator < thresholds.degeneracy) {
        entry.flagged = true;
        entry.gap = std::numeric_limits<double>::infinity();
        break;
      }
      entry.gap = std::max(entry.gap, numerator / denominator);
    }
    return entry;
  };

  for (Eigen::Index k = 0; k < empty_right.energies.size(); ++k)
    table.entries.push_back(gap_of(empty_right.embed(k), empty_right.energies[k],
                                   level(empty_right, k),
                                   static_cast<int>(k)));
  const int offset = static_cast<int>(empty_right.dim());
  for (Eigen::Index k = 0; k < q_sys.energies.size(); ++k)
    table.entries.push_back(gap_of(q_sys.embed(k), q_sys.energies[k],
                                   level(q_sys, k),
                                   offset + static_cast<int>(k)));
  return table;
}

/// Where the Gaussian filter is centred.
struct EnergyTarget {
  enum class Kind { Ground, Mid, Explicit };
  Kind kind = Kind::Ground;
  double value = 0.0;

  static EnergyTarget ground() { return {Kind::Ground, 0.0}; }
  static EnergyTarget mid() { return {Kind::Mid, 0.0}; }
  static EnergyTarget explicit_energy(double e) { return {Kind::Explicit, e}; }

  [[nodiscard]] std::string name() const {
    switch (kind) {
      case Kind::Ground:
        return "ground";
      case Kind::Mid:
        return "mid";
      case Kind::Explicit:
        return "explicit";
    }
    return {};
  }
};

struct FilterSpec {
  EnergyTarget target = EnergyTarget::ground();
  double width = 0.1;  ///< sigma, units of J
  std::uint64_t seed = 1;

  void validate() const {
    if (!(width > 0.0) || !std::isfinite(width)) throw ValidationError("filter width sigma must be positive");
  }
};

/// E_1^{Q0} for Ground, E^{Q0}_{alpha_mid} for Mid. alpha counts the single
/// N_R = 0 configuration as alpha = 0.
inline double target_energy(const SectorEigensystem& q_sys, const EnergyTarget& target) {
  switch (target.kind) {
    case EnergyTarget::Kind::Ground:
      return q_sys.energies[0];
    case EnergyTarget::Kind::Mid: {
      const int alpha = mid_alpha(q_sys.dim() + 1);
      return q_sys.energies[alpha - 1];
    }
    case EnergyTarget::Kind::Explicit:
      return target.value;
  }
  return 0.0;
}

/// exp[-((H0 - E)/sigma)^2] applied to an i.i.d. complex Gaussian vector on the
/// N_R = 1 block, normalised and embedded into the full sector.
inline StateVector filtered_initial_state(const SectorEigensystem& q_sys, const FilterSpec& spec) {
  spec.validate();
  if (q_sys.right_count != 1) throw ValidationError("filtered initial states live in the N_R = 1 block");
  const double energy = target_energy(q_sys, spec.target);

  RandomStream rng(spec.seed);
  const StateVector random = rng.complex_gaussian_vector(static_cast<Eigen::Index>(q_sys.dim()));
  StateVector coeff = q_sys.vectors.transpose().cast<Complex>() * random;
  for (Eigen::Index k = 0; k < coeff.size(); ++k) {
    const double z = (q_sys.energies[k] - energy) / spec.width;
    coeff[k] *= std::exp(-z * z);
  }
  const double norm = coeff.norm();
  if (!(norm > 1e-14))
    throw NumericalError("energy filter at E = " + std::to_string(energy) + " with sigma = " +
                         std::to_string(spec.width) + " annihilates the random state (norm " + std::to_string(norm) +
                         ")");
  coeff /= norm;
  return q_sys.embed_coefficients(q_sys.vectors.cast<Complex>() * coeff);
}

}  // namespace qmbdp
