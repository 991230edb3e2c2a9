#include <qmbdp/krylov.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace qmbdp;

namespace {

struct TwoSite {
  FockSector sector = build_sector(2, 1);
  SparseOperator h = build_hamiltonian(sector, {1.0, 0.0, 0.0, true});
  DiagonalMask q = projector_mask(sector, {1}).complement();
};

DetectionConfig default_config(int n, double delta) {
  DetectionConfig c;
  c.n_sites = n;
  c.hamiltonian.interaction = delta;
  return c;
}

}  // namespace

TEST(Arnoldi, UnitaryStepHasNoDecay) {
  const SparseOperator h = build_hamiltonian(build_sector(8, 4), {1.0, 1.0, 0.5, true});
  // Every eigenvalue of U has modulus one, so there is no leading one to
  // converge to; the leakage out of Q is still exactly zero.
  const SpectralEstimate est = leading_decay(make_plan(h, 2.0), h, DiagonalMask::identity(h.dim()));
  EXPECT_LE(std::abs(est.ritz_value), 1.0 + 1e-11);
  EXPECT_GT(std::abs(est.ritz_value), 0.999);
  EXPECT_EQ(est.decay_rate, 0.0);
}

TEST(Arnoldi, TwoSiteToy) {
  TwoSite t;
  for (double tau : {0.4, 1.0, 2.0, 4.0}) {
    const SpectralEstimate est = leading_decay(make_plan(t.h, tau), t.h, t.q);
    EXPECT_TRUE(est.converged);
    EXPECT_NEAR(est.decay_rate, -std::log(std::abs(std::cos(tau / 2))), 1e-12) << tau;
    // The reduced 1x1 operator is <left|U|left> = cos(tau/2), a real number.
    const double expected_phase = std::cos(tau / 2) > 0 ? 0.0 : std::numbers::pi;
    EXPECT_NEAR(std::abs(std::remainder(est.phase - expected_phase, 2 * std::numbers::pi)), 0.0, 1e-10);
    EXPECT_LE(std::abs(est.eigenvalue), 1.0 + 1e-11);
  }
}

TEST(Arnoldi, GenericMatrixLeadingEigenvalue) {
  // Non-normal upper-triangular matrix with known spectrum.
  const Eigen::Index n = 40;
  Eigen::MatrixXcd a = Eigen::MatrixXcd::Zero(n, n);
  RandomStream rng(3);
  for (Eigen::Index i = 0; i < n; ++i) {
    a(i, i) = std::polar(0.9 - 0.02 * static_cast<double>(i), 0.3 * static_cast<double>(i));
    for (Eigen::Index j = i + 1; j < n; ++j) a(i, j) = 0.05 * rng.complex_normal();
  }
  OperatorAction apply = [&](const StateVector& x, StateVector& y) { y = a * x; };
  ArnoldiOptions opts;
  opts.krylov_dim = 20;
  opts.max_restarts = 200;
  opts.tol = 1e-10;
  const SpectralEstimate est = arnoldi_leading(apply, static_cast<std::size_t>(n), opts);
  EXPECT_TRUE(est.converged);
  EXPECT_NEAR(std::abs(est.ritz_value - a(0, 0)), 0.0, 1e-8);
}

TEST(Arnoldi, RejectsSmallKrylovSpace) {
  TwoSite t;
  ArnoldiOptions opts;
  opts.krylov_dim = 5;
  EXPECT_THROW(leading_decay(make_plan(t.h, 1.0), t.h, t.q, opts), ValidationError);
}

TEST(Arnoldi, MatchesDenseEigensolve) {
  DetectionConfig c = default_config(10, 1.0);
  const DetectionSetup setup = DetectionSetup::prepare(c);
  ArnoldiOptions opts;
  opts.krylov_dim = 60;
  opts.kept = 30;
  opts.max_restarts = 300;
  opts.tol = 1e-12;
  const SpectralEstimate est = leading_decay(setup, opts);
  const double dense = dense_leading_decay(setup.model->hamiltonian, setup.no_signal, c.tau);
  EXPECT_TRUE(est.converged);
  EXPECT_NEAR(est.decay_rate, dense, 1e-6 * dense);
}

TEST(Arnoldi, SeedInvariance) {
  const DetectionSetup setup = DetectionSetup::prepare(default_config(10, 0.5));
  ArnoldiOptions opts;
  opts.krylov_dim = 40;
  opts.max_restarts = 200;
  opts.tol = 1e-10;
  std::vector<double> rates;
  for (std::uint64_t seed : {1, 2, 3}) {
    opts.seed = seed;
    const SpectralEstimate est = leading_decay(setup, opts);
    EXPECT_TRUE(est.converged) << seed;
    rates.push_back(est.decay_rate);
  }
  EXPECT_NEAR(rates[1], rates[0], 1e-8 * rates[0]);
  EXPECT_NEAR(rates[2], rates[0], 1e-8 * rates[0]);
}

TEST(Arnoldi, DecayRateMatchesSurvivalSlope) {
  const DetectionSetup setup = DetectionSetup::prepare(default_config(10, 0.5));
  ArnoldiOptions opts;
  opts.krylov_dim = 40;
  opts.max_restarts = 200;
  const SpectralEstimate est = leading_decay(setup, opts);
  ASSERT_GE(est.decay_rate, 0.01);
  const auto series = no_detection_series(setup);
  // Least-squares slope of ln R_k over the last quarter of the run.
  const int n = series.steps();
  const int k0 = 3 * n / 4;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int count = 0;
  for (int k = k0; k <= n; ++k) {
    const double y = series.log_survival[static_cast<std::size_t>(k)];
    sx += k;
    sy += y;
    sxx += static_cast<double>(k) * k;
    sxy += k * y;
    ++count;
  }
  const double slope = (count * sxy - sx * sy) / (count * sxx - sx * sx);
  EXPECT_NEAR(-slope, 2 * est.decay_rate, 0.1 * 2 * est.decay_rate);
}

TEST(Arnoldi, SpectralRadiusBound) {
  for (double delta : {0.5, 2.0}) {
    DetectionConfig c = default_config(8, delta);
    c.detector_p = 2;
    c.detector_q = 4;
    const SpectralEstimate est = leading_decay(DetectionSetup::prepare(c));
    EXPECT_GE(est.decay_rate, 0.0);
    EXPECT_LE(std::abs(est.ritz_value), 1.0 + 10 * kDefaultPropagatorTol);
    EXPECT_NEAR(std::abs(est.eigenvalue), std::exp(-est.decay_rate), 1e-15);
  }
}

TEST(Zeno, TwoSiteFactorConvention) {
  TwoSite t;
  const double taus[] = {0.1, 0.05, 0.01};
  const auto rows = zeno_check(t.h, t.q, taus);
  for (const auto& r : rows) {
    EXPECT_NEAR(r.variance, 0.25, 1e-14);
    EXPECT_NEAR(r.decay_rate, -std::log(std::cos(r.tau / 2)), 1e-13);
    // lambda / tau^2 -> J^2/8 = Var/2.
    EXPECT_NEAR(r.ratio, 0.125, 0.125 * r.tau * r.tau);
    EXPECT_NEAR(r.decay_rate / r.predicted, 1.0, r.tau * r.tau);
  }
}

TEST(Zeno, ZeroVarianceEigenvector) {
  const FockSector s = build_sector(4, 2);
  const SparseOperator h0 = build_hamiltonian(s, {1.0, 0.7, 0.5, false});
  const DiagonalMask q = projector_mask(s, {1, 2}).complement();
  const double taus[] = {0.05, 0.5, 2.0};
  for (const auto& r : zeno_check(h0, q, taus)) {
    EXPECT_NEAR(r.variance, 0.0, 1e-12);
    EXPECT_NEAR(r.decay_rate, 0.0, 1e-12);
  }
}

TEST(Zeno, SmallChainLeadingOrder) {
  const FockSector s = build_sector(8, 4);
  const SparseOperator h = build_hamiltonian(s, {1.0, 0.5, 0.5, true});
  const DiagonalMask q = projector_mask(s, {2, 4}).complement();
  const double taus[] = {0.05};
  const auto rows = zeno_check(h, q, taus);
  EXPECT_NEAR(rows[0].decay_rate / rows[0].predicted, 1.0, 0.05);
}

TEST(Zeno, Errors) {
  TwoSite t;
  const double bad[] = {0.0};
  EXPECT_THROW(zeno_check(t.h, t.q, bad), ValidationError);
  const SparseOperator big = build_hamiltonian(build_sector(16, 8), {1.0, 1.0, 0.5, true});
  const double taus[] = {0.05};
  EXPECT_THROW(zeno_check(big, DiagonalMask::identity(big.dim()), taus), CapacityError);
}
