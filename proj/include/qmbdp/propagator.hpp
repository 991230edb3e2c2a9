#pragma once

// exp(-i H tau) by Chebyshev expansion on the Gershgorin-rescaled spectrum,
// with Bessel-function coefficients, and a dense eigendecomposition oracle.

#include <qmbdp/bessel.hpp>
#include <qmbdp/error.hpp>
#include <qmbdp/sparse_operator.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <string>
#include <utility>
#include <vector>

namespace qmbdp {

inline constexpr double kDefaultPropagatorTol = 1e-12;
/// Tolerances below this cannot be met in double precision.
inline constexpr double kMinPropagatorTol = 1e-15;
inline constexpr std::size_t kDenseOracleCap = 5000;

struct SpectralBounds {
  double lower = 0.0;
  double upper = 0.0;
};

/// Gershgorin interval of a Hermitian operator, widened by `margin` times its
/// width on each side.
inline SpectralBounds spectral_bounds(const SparseOperator& op, double margin = 0.01) {
  if (op.dim() == 0) throw ValidationError("spectral bounds of an empty operator");
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  const auto offsets = op.row_offsets();
  const auto cols = op.columns();
  const auto vals = op.values();
  for (std::size_t r = 0; r < op.dim(); ++r) {
    double center = 0.0;
    double radius = 0.0;
    for (auto k = static_cast<std::size_t>(offsets[r]); k < static_cast<std::size_t>(offsets[r + 1]); ++k) {
      if (static_cast<std::size_t>(cols[k]) == r)
        center = vals[k];
      else
        radius += std::abs(vals[k]);
    }
    lo = std::min(lo, center - radius);
    hi = std::max(hi, center + radius);
  }
  const double width = hi - lo;
  const double pad = width > 0.0 ? margin * width : margin * std::max(1.0, std::abs(hi));
  return {lo - pad, hi + pad};
}

/// Coefficients of the truncated expansion
///   exp(-i H tau) ~ sum_{k<=order} c_k T_k((H - center)/half_width),
/// with c_k = (2 - delta_k0) (-i)^k J_k(a) exp(-i b), a = tau*half_width,
/// b = tau*center.
struct ChebyshevPlan {
  double tau = 0.0;
  double tolerance = kDefaultPropagatorTol;
  SpectralBounds bounds;
  double center = 0.0;
  double half_width = 1.0;
  double a = 0.0;
  double b = 0.0;
  int order = 0;
  std::vector<Complex> coefficients{Complex{1.0, 0.0}};

  /// Sum of |c_k| over the dropped terms; bounds the truncation error.
  double tail_bound = 0.0;
};

inline ChebyshevPlan make_plan(const SpectralBounds& bounds, double tau, double tol = kDefaultPropagatorTol) {
  if (!(tau >= 0.0) || !std::isfinite(tau)) throw ValidationError("time step must be finite and nonnegative");
  if (!(tol >= kMinPropagatorTol))
    throw ValidationError("propagator tolerance " + std::to_string(tol) +
                          " is below what double precision can deliver (minimum 1e-15)");
  if (!(bounds.upper > bounds.lower)) throw ValidationError("spectral bounds must have positive width");

  ChebyshevPlan plan;
  plan.tau = tau;
  plan.tolerance = tol;
  plan.bounds = bounds;
  plan.center = 0.5 * (bounds.upper + bounds.lower);
  plan.half_width = 0.5 * (bounds.upper - bounds.lower);
  plan.a = tau * plan.half_width;
  plan.b = tau * plan.center;
  if (plan.a == 0.0) return plan;

  // Tabulate well past the point where the terms are negligible.
  int kmax = static_cast<int>(std::ceil(plan.a + 40.0 + 20.0 * std::cbrt(plan.a)));
  std::vector<double> j = bessel_j_sequence(kmax, plan.a);

  // tail[k] = 2 sum_{m>k} |J_m(a)|
  std::vector<double> tail(j.size(), 0.0);
  for (int k = kmax - 1; k >= 0; --k)
    tail[static_cast<std::size_t>(k)] = tail[static_cast<std::size_t>(k) + 1] + 2.0 * std::abs(j[static_cast<std::size_t>(k) + 1]);

  int order = -1;
  for (int k = static_cast<int>(std::ceil(plan.a)); k < kmax; ++k) {
    if (tail[static_cast<std::size_t>(k)] < tol && 2.0 * std::abs(j[static_cast<std::size_t>(k)]) < tol) {
      order = k;
      break;
    }
  }
  if (order < 0) throw NumericalError("Chebyshev expansion did not reach tolerance " + std::to_string(tol));

  plan.order = order;
  plan.tail_bound = tail[static_cast<std::size_t>(order)];
  plan.coefficients.resize(static_cast<std::size_t>(order) + 1);
  const Complex phase = std::exp(Complex{0.0, -plan.b});
  Complex minus_i_pow{1.0, 0.0};
  for (int k = 0; k <= order; ++k) {
    const double weight = k == 0 ? 1.0 : 2.0;
    plan.coefficients[static_cast<std::size_t>(k)] = weight * minus_i_pow * j[static_cast<std::size_t>(k)] * phase;
    minus_i_pow *= Complex{0.0, -1.0};
  }
  return plan;
}

inline ChebyshevPlan make_plan(const SparseOperator& op, double tau, double tol = kDefaultPropagatorTol) {
  return make_plan(spectral_bounds(op), tau, tol);
}

/// Applies a plan in place. Holds two work vectors; one propagator per thread.
class ChebyshevPropagator {
 public:
  ChebyshevPropagator(const SparseOperator& op, ChebyshevPlan plan) : op_(&op), plan_(std::move(plan)) {}

  [[nodiscard]] const ChebyshevPlan& plan() const noexcept { return plan_; }
  [[nodiscard]] const SparseOperator& op() const noexcept { return *op_; }
  [[nodiscard]] long matvecs() const noexcept { return matvecs_; }

  void apply(StateVector& psi) {
    if (static_cast<std::size_t>(psi.size()) != op_->dim())
      throw ValidationError("dimension mismatch: operator " + std::to_string(op_->dim()) + ", state " +
                            std::to_string(psi.size()));
    const auto& c = plan_.coefficients;
    if (plan_.order == 0) {
      psi *= c[0];
      return;
    }
    prev_ = psi;
    curr_.setZero(psi.size());
    const double inv_width = 1.0 / plan_.half_width;
    op_->apply_recurrence(prev_, curr_, plan_.center, inv_width);
    psi = c[0] * prev_ + c[1] * curr_;
    for (int k = 2; k <= plan_.order; ++k) {
      op_->apply_recurrence(curr_, prev_, plan_.center, 2.0 * inv_width);
      prev_.swap(curr_);
      psi.noalias() += c[static_cast<std::size_t>(k)] * curr_;
    }
    matvecs_ += plan_.order;
  }

 private:
  const SparseOperator* op_;
  ChebyshevPlan plan_;
  StateVector prev_;
  StateVector curr_;
  long matvecs_ = 0;
};

inline StateVector evolve(const ChebyshevPlan& plan, const SparseOperator& op, const StateVector& psi) {
  StateVector out = psi;
  ChebyshevPropagator(op, plan).apply(out);
  return out;
}

/// Exact propagation through a full eigendecomposition. Test oracle only.
class DensePropagator {
 public:
  explicit DensePropagator(const SparseOperator& op) {
    if (op.dim() > kDenseOracleCap)
      throw CapacityError("propagator", "dense oracle limited to dimension " + std::to_string(kDenseOracleCap) +
                                            ", got " + std::to_string(op.dim()));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(op.to_dense());
    energies_ = solver.eigenvalues();
    vectors_ = solver.eigenvectors();
  }

  [[nodiscard]] const Eigen::VectorXd& energies() const noexcept { return energies_; }
  [[nodiscard]] const Eigen::MatrixXd& vectors() const noexcept { return vectors_; }

  [[nodiscard]] StateVector evolve(const StateVector& psi, double tau) const {
    StateVector coeff = vectors_.transpose().cast<Complex>() * psi;
    for (Eigen::Index k = 0; k < coeff.size(); ++k) coeff[k] *= std::exp(Complex{0.0, -energies_[k] * tau});
    return vectors_.cast<Complex>() * coeff;
  }

  /// exp(-i H tau) as a dense matrix.
  [[nodiscard]] Eigen::MatrixXcd unitary(double tau) const {
    Eigen::VectorXcd phases(energies_.size());
    for (Eigen::Index k = 0; k < energies_.size(); ++k) phases[k] = std::exp(Complex{0.0, -energies_[k] * tau});
    const Eigen::MatrixXcd v = vectors_.cast<Complex>();
    return v * phases.asDiagonal() * v.transpose();
  }

 private:
  Eigen::VectorXd energies_;
  Eigen::MatrixXd vectors_;
};

inline StateVector dense_evolve_oracle(const SparseOperator& op, const StateVector& psi, double tau) {
  return DensePropagator(op).evolve(psi, tau);
}

}  // namespace qmbdp
