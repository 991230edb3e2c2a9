#include <qmbdp/operators.hpp>
#include <qmbdp/sector_spectra.hpp>

#include <gtest/gtest.h>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

using namespace qmbdp;

namespace {

struct Blocks {
  FockSector sector;
  SparseOperator h0;
  SparseOperator h1;
  RightCountMask mask;
};

Blocks blocks(int n, double delta, double eps0 = 0.5) {
  Blocks b;
  b.sector = build_sector(n, n / 2);
  const HamiltonianParams p{1.0, delta, eps0, false};
  b.h0 = build_hamiltonian(b.sector, p);
  b.h1 = build_h1(b.sector, p);
  b.mask = right_count(b.sector);
  return b;
}

SparseOperator affine(const SparseOperator& op, double scale, double shift) {
  SparseOperator::Builder b(op.dim());
  const auto off = op.row_offsets();
  const auto cols = op.columns();
  const auto vals = op.values();
  for (std::size_t r = 0; r < op.dim(); ++r) {
    for (auto k = static_cast<std::size_t>(off[r]); k < static_cast<std::size_t>(off[r + 1]); ++k)
      b.add(static_cast<std::size_t>(cols[k]), scale * vals[k]);
    if (shift != 0.0) b.add(r, shift);
    b.finish_row();
  }
  return std::move(b).finish(op.symmetric());
}

VvptGapTable gaps(const SparseOperator& h0, const SparseOperator& h1, const RightCountMask& mask) {
  return vvpt_gap(diagonalize_sector(h0, mask, 0), diagonalize_sector(h0, mask, 1), diagonalize_sector(h0, mask, 2),
                  h1);
}

}  // namespace

TEST(DiagonalizeSector, EmptyRightHalfEnergy) {
  for (int n : {4, 8, 12}) {
    const double delta = 1.7;
    const double eps0 = 0.5;
    const Blocks b = blocks(n, delta, eps0);
    const SectorEigensystem sys = diagonalize_sector(b.h0, b.mask, 0);
    ASSERT_EQ(sys.dim(), 1u);
    EXPECT_NEAR(sys.energies[0], -delta * (n / 2 - 1) + eps0, 1e-13);
  }
}

TEST(DiagonalizeSector, SingleParticleBlockDimension) {
  const Blocks b = blocks(14, 1.0);
  EXPECT_EQ(diagonalize_sector(b.h0, b.mask, 1).dim(), 49u);
}

TEST(DiagonalizeSector, MatchesFullDenseSpectrum) {
  const Blocks b = blocks(8, 2.0);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> full(b.h0.to_dense());
  // Label full eigenvectors by their (conserved) right count.
  std::vector<double> ones;
  for (Eigen::Index k = 0; k < full.eigenvalues().size(); ++k) {
    double nr = 0.0;
    for (Eigen::Index i = 0; i < full.eigenvectors().rows(); ++i)
      nr += std::norm(full.eigenvectors()(i, k)) * b.sector.right_count(b.sector.state(static_cast<std::size_t>(i)));
    if (std::abs(nr - 1.0) < 1e-6) ones.push_back(full.eigenvalues()[k]);
  }
  const SectorEigensystem sys = diagonalize_sector(b.h0, b.mask, 1);
  ASSERT_EQ(ones.size(), sys.dim());
  std::sort(ones.begin(), ones.end());
  for (std::size_t k = 0; k < ones.size(); ++k) EXPECT_NEAR(sys.energies[static_cast<Eigen::Index>(k)], ones[k], 1e-12);
}

TEST(DiagonalizeSector, OrthonormalWithSmallResiduals) {
  const Blocks b = blocks(12, 1.0);
  for (int r : {1, 2}) {
    const SectorEigensystem sys = diagonalize_sector(b.h0, b.mask, r);
    const auto d = static_cast<Eigen::Index>(sys.dim());
    EXPECT_LT((sys.vectors.transpose() * sys.vectors - Eigen::MatrixXd::Identity(d, d)).cwiseAbs().maxCoeff(), 1e-10);
    for (Eigen::Index k = 0; k < d; ++k) {
      const StateVector v = sys.embed(k);
      StateVector hv;
      b.h0.apply(v, hv);
      EXPECT_LT((hv - sys.energies[k] * v).norm(), 1e-9);
    }
  }
}

TEST(DiagonalizeSector, RejectsCoupledOperatorAndOversizedBlocks) {
  const Blocks b = blocks(8, 1.0);
  const SparseOperator h = build_hamiltonian(b.sector, {1.0, 1.0, 0.5, true});
  EXPECT_THROW(diagonalize_sector(h, b.mask, 1), ValidationError);
  try {
    diagonalize_sector(b.h0, b.mask, 2, 10);
    FAIL() << "expected CapacityError";
  } catch (const CapacityError& e) {
    EXPECT_EQ(e.module(), "sector-spectra");
  }
}

TEST(VvptGap, ZeroCouplingGivesZeroGaps) {
  const Blocks b = blocks(8, 1.0);
  SparseOperator::Builder zero(b.h0.dim());
  for (std::size_t r = 0; r < b.h0.dim(); ++r) zero.finish_row();
  const VvptGapTable t = gaps(b.h0, std::move(zero).finish(true), b.mask);
  ASSERT_EQ(t.entries.size(), 17u);
  EXPECT_EQ(t.q0_dim, 17u);
  EXPECT_EQ(t.alpha_mid, 9);
  for (const auto& e : t.entries) {
    EXPECT_EQ(e.gap, 0.0);
    EXPECT_FALSE(e.flagged);
  }
}

TEST(VvptGap, IndexingAndNonnegativity) {
  const Blocks b = blocks(10, 1.5);
  const VvptGapTable t = gaps(b.h0, b.h1, b.mask);
  const SectorEigensystem q = diagonalize_sector(b.h0, b.mask, 1);
  ASSERT_EQ(t.entries.size(), 26u);
  for (int a = 0; a < 26; ++a) {
    EXPECT_EQ(t.at(a).alpha, a);
    EXPECT_GE(t.at(a).gap, 0.0);
    if (a >= 1) {
      EXPECT_EQ(t.at(a).energy, q.energies[a - 1]);
    }
  }
}

TEST(VvptGap, MatchesDirectFormula) {
  const Blocks b = blocks(8, 0.7);
  const SectorEigensystem s0 = diagonalize_sector(b.h0, b.mask, 0);
  const SectorEigensystem s1 = diagonalize_sector(b.h0, b.mask, 1);
  const SectorEigensystem s2 = diagonalize_sector(b.h0, b.mask, 2);
  const VvptGapTable t = vvpt_gap(s0, s1, s2, b.h1);
  const Eigen::MatrixXd h1 = b.h1.to_dense();
  for (Eigen::Index a = 0; a < static_cast<Eigen::Index>(s1.dim()); ++a) {
    const Eigen::VectorXd va = s1.embed(a).real();
    double best = 0.0;
    for (Eigen::Index nu = 0; nu < static_cast<Eigen::Index>(s2.dim()); ++nu) {
      const Eigen::VectorXd vn = s2.embed(nu).real();
      best = std::max(best, std::abs(vn.dot(h1 * va) / (s1.energies[a] - s2.energies[nu])));
    }
    EXPECT_NEAR(t.at(static_cast<int>(a) + 1).gap, best, 1e-12 * std::max(1.0, best));
  }
}

TEST(VvptGap, InvariantUnderGlobalShift) {
  const Blocks b = blocks(10, 1.2);
  const VvptGapTable base = gaps(b.h0, b.h1, b.mask);
  const VvptGapTable shifted = gaps(affine(b.h0, 1.0, 3.25), b.h1, b.mask);
  for (std::size_t i = 0; i < base.entries.size(); ++i)
    EXPECT_NEAR(shifted.entries[i].gap, base.entries[i].gap, 1e-12 * std::max(1.0, base.entries[i].gap));
}

TEST(VvptGap, LinearInCoupling) {
  const Blocks b = blocks(10, 0.8);
  const VvptGapTable base = gaps(b.h0, b.h1, b.mask);
  const VvptGapTable doubled = gaps(b.h0, affine(b.h1, 2.0, 0.0), b.mask);
  for (std::size_t i = 0; i < base.entries.size(); ++i)
    EXPECT_NEAR(doubled.entries[i].gap, 2 * base.entries[i].gap, 1e-12 * std::max(1.0, base.entries[i].gap));
}

TEST(VvptGap, RejectsWrongBlocks) {
  const Blocks b = blocks(8, 1.0);
  const SectorEigensystem s1 = diagonalize_sector(b.h0, b.mask, 1);
  EXPECT_THROW(vvpt_gap(s1, s1, s1, b.h1), ValidationError);
}

TEST(FilteredState, WideFilterReturnsRandomDraw) {
  const Blocks b = blocks(10, 1.0);
  const SectorEigensystem q = diagonalize_sector(b.h0, b.mask, 1);
  const StateVector psi = filtered_initial_state(q, {EnergyTarget::ground(), 1e6, 42});
  RandomStream rng(42);
  StateVector raw = rng.complex_gaussian_vector(static_cast<Eigen::Index>(q.dim()));
  raw.normalize();
  EXPECT_LT((q.restrict(psi) - raw).norm(), 1e-10);
}

TEST(FilteredState, NarrowFilterSelectsGroundState) {
  const Blocks b = blocks(10, 1.0);
  const SectorEigensystem q = diagonalize_sector(b.h0, b.mask, 1);
  ASSERT_GT(q.energies[1] - q.energies[0], 1e-3);
  const StateVector psi = filtered_initial_state(q, {EnergyTarget::ground(), 1e-6, 3});
  EXPECT_GT(std::abs(q.embed(0).dot(psi)), 0.999999);
}

TEST(FilteredState, EnergyVarianceBound) {
  const Blocks b = blocks(12, 2.0);
  const SectorEigensystem q = diagonalize_sector(b.h0, b.mask, 1);
  const double sigma = 0.1;
  for (auto target : {EnergyTarget::ground(), EnergyTarget::mid()}) {
    const StateVector psi = filtered_initial_state(q, {target, sigma, 11});
    StateVector h;
    b.h0.apply(psi, h);
    const double e = psi.dot(h).real();
    const double var = h.squaredNorm() - e * e;
    // Spectral-discreteness correction: the filter centre may sit between levels.
    const double centre = target_energy(q, target);
    double spacing = 0.0;
    for (Eigen::Index k = 0; k < q.energies.size(); ++k)
      if (std::abs(q.energies[k] - centre) < 3 * sigma) spacing = std::max(spacing, std::abs(q.energies[k] - e));
    EXPECT_LE(var, sigma * sigma / 2 + spacing * spacing) << target.name();
    EXPECT_NEAR(psi.norm(), 1.0, 1e-13);
  }
}

TEST(FilteredState, SupportedOnSingleParticleBlock) {
  for (int n : {4, 6, 8, 10, 12}) {
    const Blocks b = blocks(n, 1.0);
    const SectorEigensystem q = diagonalize_sector(b.h0, b.mask, 1);
    const StateVector psi = filtered_initial_state(q, {EnergyTarget::mid(), 0.1, 5});
    for (std::size_t i = 0; i < b.sector.dim(); ++i) {
      if (b.mask.counts[i] != 1) {
        ASSERT_EQ(psi[static_cast<Eigen::Index>(i)], Complex(0.0, 0.0));
      }
    }
    for (int p = 1; p <= n / 2; ++p)
      for (int qq = p + 1; qq <= n / 2; ++qq) EXPECT_EQ(projector_mask(b.sector, {p, qq}).weight(psi), 0.0);
  }
}

TEST(FilteredState, MidTarget) {
  const Blocks b = blocks(14, 1.0);
  const SectorEigensystem q = diagonalize_sector(b.h0, b.mask, 1);
  // D_Q0 = 50, alpha_mid = 25, i.e. the 25th N_R = 1 level.
  EXPECT_EQ(target_energy(q, EnergyTarget::mid()), q.energies[24]);
  EXPECT_EQ(target_energy(q, EnergyTarget::explicit_energy(0.3)), 0.3);
}

TEST(FilteredState, Errors) {
  const Blocks b = blocks(8, 1.0);
  const SectorEigensystem q = diagonalize_sector(b.h0, b.mask, 1);
  EXPECT_THROW(filtered_initial_state(q, {EnergyTarget::ground(), 0.0, 1}), ValidationError);
  EXPECT_THROW(filtered_initial_state(q, {EnergyTarget::explicit_energy(1e3), 1e-3, 1}), NumericalError);
  EXPECT_THROW(filtered_initial_state(diagonalize_sector(b.h0, b.mask, 2), {}), ValidationError);
}
