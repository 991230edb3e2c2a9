#pragma once

// Leading eigenvalue e^{-lambda_1 + i theta_1} of the sub-unitary step
// M_Q = Q exp(-i H tau) Q from its action alone.
//
// The iteration is Arnoldi with thick restarts in the Krylov-Schur form: after
// each cycle the Schur form of the projected matrix is reordered so the
// largest-magnitude Ritz values lead, and the corresponding Schur vectors are
// kept as the start of the next cycle. Keeping a single Ritz vector stagnates
// on M_Q, whose dominant eigenvalues crowd the unit circle.

#include <qmbdp/detection.hpp>
#include <qmbdp/error.hpp>
#include <qmbdp/operators.hpp>
#include <qmbdp/propagator.hpp>
#include <qmbdp/random.hpp>
#include <qmbdp/sparse_operator.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace qmbdp {

/// out = M in.
using OperatorAction = std::function<void(const StateVector& in, StateVector& out)>;

struct ArnoldiOptions {
  int krylov_dim = 30;
  int kept = 0;  ///< Schur vectors kept across a restart; 0 means krylov_dim / 2
  int max_restarts = 50;
  double tol = 1e-8;
  std::uint64_t seed = 1;
};

struct SpectralEstimate {
  double decay_rate = 0.0;  ///< lambda_1 >= 0, per step
  double phase = 0.0;       ///< theta_1, radians
  Complex eigenvalue{1.0, 0.0};  ///< e^{-lambda_1 + i theta_1}
  Complex ritz_value{1.0, 0.0};  ///< raw Ritz value of the projected matrix
  int krylov_dim = 0;
  int restarts = 0;
  double residual = 0.0;  ///< ||M y - mu y|| for the leading Ritz pair
  bool converged = false;
  bool invariant_subspace = false;
  long applications = 0;
  StateVector ritz_vector;  ///< normalised
};

namespace detail {

/// [c s; -conj(s) c] [f; g] = [r; 0] with real c.
inline void givens(Complex f, Complex g, double& c, Complex& s) {
  if (g == Complex{0.0, 0.0}) {
    c = 1.0;
    s = 0.0;
    return;
  }
  if (f == Complex{0.0, 0.0}) {
    c = 0.0;
    s = std::conj(g) / std::abs(g);
    return;
  }
  const double nf = std::abs(f);
  const double norm = std::hypot(nf, std::abs(g));
  c = nf / norm;
  s = (f / nf) * std::conj(g) / norm;
}

/// Swaps the adjacent eigenvalues T(k,k) and T(k+1,k+1) of an upper
/// triangular T, keeping A = U T U^* intact.
inline void swap_schur(Eigen::MatrixXcd& t, Eigen::MatrixXcd& u, Eigen::Index k) {
  const Eigen::Index n = t.rows();
  const Complex t11 = t(k, k);
  const Complex t22 = t(k + 1, k + 1);
  double c = 0.0;
  Complex s;
  givens(t(k, k + 1), t22 - t11, c, s);
  auto rot = [](Complex& x, Complex& y, double cc, Complex ss) {
    const Complex tmp = cc * x + ss * y;
    y = cc * y - std::conj(ss) * x;
    x = tmp;
  };
  for (Eigen::Index j = k + 2; j < n; ++j) rot(t(k, j), t(k + 1, j), c, s);
  for (Eigen::Index i = 0; i < k; ++i) rot(t(i, k), t(i, k + 1), c, std::conj(s));
  t(k, k) = t22;
  t(k + 1, k + 1) = t11;
  for (Eigen::Index i = 0; i < u.rows(); ++i) rot(u(i, k), u(i, k + 1), c, std::conj(s));
}

/// Reorders a complex Schur form so the `count` largest-magnitude eigenvalues
/// occupy the leading diagonal positions in descending magnitude.
inline void sort_schur_by_magnitude(Eigen::MatrixXcd& t, Eigen::MatrixXcd& u, Eigen::Index count) {
  const Eigen::Index n = t.rows();
  for (Eigen::Index p = 0; p < std::min(count, n); ++p) {
    Eigen::Index best = p;
    for (Eigen::Index i = p + 1; i < n; ++i)
      if (std::abs(t(i, i)) > std::abs(t(best, best))) best = i;
    for (Eigen::Index i = best; i > p; --i) swap_schur(t, u, i - 1);
  }
}

/// Leading eigenpair of a small dense matrix, eigenvector normalised.
inline void leading_eigenpair(const Eigen::MatrixXcd& h, Complex& value, Eigen::VectorXcd& vector) {
  Eigen::ComplexEigenSolver<Eigen::MatrixXcd> solver(h);
  if (solver.info() != Eigen::Success) throw NumericalError("eigensolver failed on the projected matrix");
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < h.rows(); ++i)
    if (std::abs(solver.eigenvalues()[i]) > std::abs(solver.eigenvalues()[best])) best = i;
  value = solver.eigenvalues()[best];
  vector = solver.eigenvectors().col(best).normalized();
}

}  // namespace detail

/// Largest-magnitude eigenvalue of the operator `apply` on a space of dimension
/// `dim`. The random start vector is confined to `start_mask` when given. The
/// Krylov size is capped by the dimension reachable from the start vector.
inline SpectralEstimate arnoldi_leading(const OperatorAction& apply, std::size_t dim, const ArnoldiOptions& options,
                                        const DiagonalMask* start_mask = nullptr) {
  if (options.krylov_dim < 10) throw ValidationError("Krylov dimension must be at least 10");
  if (options.max_restarts < 0) throw ValidationError("max_restarts must be nonnegative");
  if (dim == 0) throw ValidationError("empty operator");
  if (start_mask != nullptr && start_mask->dim() != dim) throw ValidationError("start mask dimension mismatch");

  const auto n = static_cast<Eigen::Index>(dim);
  const std::size_t reachable = start_mask != nullptr ? start_mask->rank() : dim;
  if (reachable == 0) throw ValidationError("start mask selects nothing");
  const Eigen::Index m = std::min<Eigen::Index>(options.krylov_dim, static_cast<Eigen::Index>(reachable));
  const Eigen::Index kept =
      std::clamp<Eigen::Index>(options.kept > 0 ? options.kept : options.krylov_dim / 2, 1, std::max<Eigen::Index>(m - 1, 1));

  RandomStream rng(options.seed);
  StateVector start = rng.complex_gaussian_vector(n);
  if (start_mask != nullptr) start_mask->project(start);

  Eigen::MatrixXcd basis(n, m + 1);
  Eigen::MatrixXcd h = Eigen::MatrixXcd::Zero(m + 1, m);
  basis.col(0) = start.normalized();

  SpectralEstimate est;
  est.krylov_dim = static_cast<int>(m);
  StateVector w(n);
  StateVector in(n);
  Eigen::Index first = 0;
  double previous_magnitude = -1.0;

  for (int cycle = 0;; ++cycle) {
    // Extend the factorisation A V_j = V_{j+1} Hbar_j up to j = m.
    Eigen::Index filled = m;
    for (Eigen::Index j = first; j < m; ++j) {
      in = basis.col(j);
      apply(in, w);
      ++est.applications;
      const double wnorm = w.norm();
      // Classical Gram-Schmidt, applied twice.
      for (int pass = 0; pass < 2; ++pass) {
        const Eigen::VectorXcd proj = basis.leftCols(j + 1).adjoint() * w;
        w.noalias() -= basis.leftCols(j + 1) * proj;
        h.col(j).head(j + 1) += proj;
      }
      const double beta = w.norm();
      h(j + 1, j) = beta;
      if (beta < 1e-14 * std::max(1.0, wnorm)) {
        filled = j + 1;
        break;
      }
      basis.col(j + 1) = w / beta;
    }

    const bool breakdown = filled < m;
    const Eigen::MatrixXcd projected = h.topLeftCorner(filled, filled);
    Complex mu;
    Eigen::VectorXcd y;
    detail::leading_eigenpair(projected, mu, y);
    const double residual = breakdown ? 0.0 : std::abs(h.row(m).head(m).dot(y.conjugate()));

    est.ritz_value = mu;
    est.residual = residual;
    est.restarts = cycle;
    est.ritz_vector = (basis.leftCols(filled) * y).normalized();
    est.invariant_subspace = breakdown;

    const double magnitude = std::abs(mu);
    const bool settled = previous_magnitude >= 0.0 && std::abs(magnitude - previous_magnitude) < options.tol;
    est.converged = breakdown || (settled && residual < options.tol * std::max(magnitude, 1e-300));
    if (est.converged || cycle >= options.max_restarts) break;
    previous_magnitude = magnitude;

    // Thick restart on the leading Schur vectors.
    Eigen::ComplexSchur<Eigen::MatrixXcd> schur(projected);
    Eigen::MatrixXcd t = schur.matrixT();
    Eigen::MatrixXcd u = schur.matrixU();
    detail::sort_schur_by_magnitude(t, u, kept);
    const Eigen::MatrixXcd z = u.leftCols(kept);
    const Eigen::RowVectorXcd b = h.row(m).head(m) * z;
    const Eigen::MatrixXcd kept_basis = basis.leftCols(m) * z;
    const StateVector next = basis.col(m);

    h.setZero();
    h.topLeftCorner(kept, kept) = t.topLeftCorner(kept, kept);
    h.row(kept).head(kept) = b;
    basis.leftCols(kept) = kept_basis;
    basis.col(kept) = next;
    first = kept;
  }

  est.decay_rate = std::max(0.0, -std::log(std::abs(est.ritz_value)));
  est.phase = std::arg(est.ritz_value);
  est.eigenvalue = std::polar(std::exp(-est.decay_rate), est.phase);
  return est;
}

/// For an eigenvector v of M_Q lying in the Q subspace, |mu|^2 = 1 - ||P U v||^2,
/// so lambda = -log1p(-||P U v||^2) / 2. Unlike -log|mu| this keeps full
/// relative precision when lambda is tiny.
inline double leakage_decay_rate(const ChebyshevPlan& plan, const SparseOperator& h, const DiagonalMask& q,
                                 const StateVector& v) {
  StateVector w = v.normalized();
  ChebyshevPropagator(h, plan).apply(w);
  const double leak = std::clamp(w.squaredNorm() - q.weight(w), 0.0, 1.0);
  return leak >= 1.0 ? std::numeric_limits<double>::infinity() : -0.5 * std::log1p(-leak);
}

/// lambda_1 and theta_1 of M_Q(tau): Arnoldi on the action of M_Q, then the
/// decay rate re-evaluated from the leakage of the leading Ritz vector.
inline SpectralEstimate leading_decay(const ChebyshevPlan& plan, const SparseOperator& h, const DiagonalMask& q,
                                      const ArnoldiOptions& options = {}) {
  ChebyshevPropagator propagator(h, plan);
  OperatorAction mq = [&](const StateVector& in, StateVector& out) {
    out = in;
    q.project(out);
    propagator.apply(out);
    q.project(out);
  };
  SpectralEstimate est = arnoldi_leading(mq, h.dim(), options, &q);
  est.decay_rate = leakage_decay_rate(plan, h, q, est.ritz_vector);
  est.eigenvalue = std::polar(std::exp(-est.decay_rate), est.phase);
  return est;
}

inline SpectralEstimate leading_decay(const DetectionSetup& setup, const ArnoldiOptions& options = {}) {
  return leading_decay(setup.plan, setup.model->hamiltonian, setup.no_signal, options);
}

/// Dense reference for lambda_1: eigensolve of M_Q restricted to the Q subspace
/// with exp(-i H tau) from a full eigendecomposition. Test oracle only.
inline double dense_leading_decay(const SparseOperator& h, const DiagonalMask& q, double tau) {
  const DensePropagator dense(h);
  const Eigen::MatrixXcd u = dense.unitary(tau);
  std::vector<Eigen::Index> rows;
  for (std::size_t i = 0; i < q.dim(); ++i)
    if (q[i]) rows.push_back(static_cast<Eigen::Index>(i));
  const auto dq = static_cast<Eigen::Index>(rows.size());
  Eigen::MatrixXcd mq(dq, dq);
  for (Eigen::Index i = 0; i < dq; ++i)
    for (Eigen::Index j = 0; j < dq; ++j) mq(i, j) = u(rows[static_cast<std::size_t>(i)], rows[static_cast<std::size_t>(j)]);
  Complex mu;
  Eigen::VectorXcd v;
  detail::leading_eigenpair(mq, mu, v);
  StateVector full = StateVector::Zero(u.rows());
  for (Eigen::Index i = 0; i < dq; ++i) full[rows[static_cast<std::size_t>(i)]] = v[i];
  const StateVector w = u * full;
  const double leak = std::clamp(w.squaredNorm() - q.weight(w), 0.0, 1.0);
  return -0.5 * std::log1p(-leak);
}

struct ZenoRow {
  double tau = 0.0;
  double decay_rate = 0.0;  ///< lambda_1(tau)
  double ratio = 0.0;       ///< lambda_1 / tau^2
  double variance = 0.0;    ///< Var(H) in the QHQ eigenvector with the smallest variance
  double predicted = 0.0;   ///< tau^2 * variance / 2
};

/// Small-tau behaviour of lambda_1. To leading order e^{-lambda} =
/// 1 - tau^2 Var/2, i.e. lambda = tau^2 Var / 2 with Var the energy variance of
/// the QHQ eigenvector that decays slowest.
inline std::vector<ZenoRow> zeno_check(const SparseOperator& h, const DiagonalMask& q, std::span<const double> taus) {
  if (h.dim() > kDenseOracleCap)
    throw CapacityError("krylov", "zeno_check is dense and limited to dimension " + std::to_string(kDenseOracleCap));
  if (q.dim() != h.dim()) throw ValidationError("mask and operator dimensions differ");
  for (double tau : taus)
    if (!(tau > 0.0)) throw ValidationError("zeno_check needs positive tau values");

  const Eigen::MatrixXd dense = h.to_dense();
  std::vector<Eigen::Index> rows;
  for (std::size_t i = 0; i < q.dim(); ++i)
    if (q[i]) rows.push_back(static_cast<Eigen::Index>(i));
  const auto dq = static_cast<Eigen::Index>(rows.size());
  Eigen::MatrixXd block(dq, dq);
  Eigen::MatrixXd columns(dense.rows(), dq);
  for (Eigen::Index j = 0; j < dq; ++j) {
    columns.col(j) = dense.col(rows[static_cast<std::size_t>(j)]);
    for (Eigen::Index i = 0; i < dq; ++i) block(i, j) = dense(rows[static_cast<std::size_t>(i)], rows[static_cast<std::size_t>(j)]);
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(block);
  // Var_m = ||H v_m||^2 - E_m^2 for v_m supported on Q.
  const Eigen::MatrixXd hv = columns * solver.eigenvectors();
  double min_variance = std::numeric_limits<double>::infinity();
  for (Eigen::Index m = 0; m < dq; ++m) {
    const double e = solver.eigenvalues()[m];
    min_variance = std::min(min_variance, std::max(0.0, hv.col(m).squaredNorm() - e * e));
  }

  std::vector<ZenoRow> out;
  for (double tau : taus) {
    ZenoRow row;
    row.tau = tau;
    row.decay_rate = dense_leading_decay(h, q, tau);
    row.ratio = row.decay_rate / (tau * tau);
    row.variance = min_variance;
    row.predicted = 0.5 * tau * tau * min_variance;
    out.push_back(row);
  }
  return out;
}

}  // namespace qmbdp
