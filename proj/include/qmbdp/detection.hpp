#pragma once

// Stroboscopic detection: the no-detection probability R_k = ||M_Q^k psi(0)||^2
// with M_Q = Q exp(-i H tau) Q and Q = 1 - n_p n_q, free dynamics of diagonal
// observables, and extraction of the transition point Delta*.

#include <qmbdp/error.hpp>
#include <qmbdp/fock_sector.hpp>
#include <qmbdp/operators.hpp>
#include <qmbdp/propagator.hpp>
#include <qmbdp/sector_spectra.hpp>
#include <qmbdp/sparse_operator.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace qmbdp {

/// Sector and operators of the chain at one parameter point.
struct ChainModel {
  FockSector sector;
  HamiltonianParams params;
  SparseOperator hamiltonian;      ///< H
  SparseOperator cut_hamiltonian;  ///< H0, no hop across the 0|1 bond
  SparseOperator boundary_term;    ///< H1 = H - H0
  RightCountMask right_counts;

  /// Half filling.
  static ChainModel build(int n_sites, const HamiltonianParams& params, const SectorLimits& limits = {}) {
    ChainModel m;
    m.sector = build_sector(n_sites, n_sites / 2, limits);
    m.params = params;
    m.params.boundary_hop = true;
    HamiltonianParams cut = params;
    cut.boundary_hop = false;
    m.hamiltonian = build_hamiltonian(m.sector, m.params);
    m.cut_hamiltonian = build_hamiltonian(m.sector, cut);
    m.boundary_term = difference(m.hamiltonian, m.cut_hamiltonian);
    m.right_counts = right_count(m.sector);
    return m;
  }

  [[nodiscard]] SectorEigensystem block(int r) const { return diagonalize_sector(cut_hamiltonian, right_counts, r); }

  [[nodiscard]] VvptGapTable gaps(const GapThresholds& thresholds = {}) const {
    return vvpt_gap(block(0), block(1), block(2), boundary_term, thresholds);
  }
};

/// Approximate memory of a half-filled ChainModel plus the work vectors of a
/// propagation run, in bytes.
inline double estimated_run_bytes(int n_sites) {
  const double d = static_cast<double>(binomial(n_sites, n_sites / 2));
  const double nnz = d * (n_sites / 2 + 1);
  const double csr = 8.0 * (d + 1) + 12.0 * nnz;
  return 9.0 * d + 2.0 * csr + 8.0 * 16.0 * d;
}

/// Rejects chains whose estimated footprint exceeds `max_bytes`.
inline void check_run_capacity(int n_sites, double max_bytes) {
  if (n_sites < 2 || n_sites % 2 != 0 || n_sites > 62) throw ValidationError("n_sites must be even, 2..62");
  const double need = estimated_run_bytes(n_sites);
  if (need > max_bytes)
    throw CapacityError("detection", "N = " + std::to_string(n_sites) + " needs about " +
                                         std::to_string(static_cast<long long>(need / 1048576.0)) +
                                         " MiB, above the budget of " +
                                         std::to_string(static_cast<long long>(max_bytes / 1048576.0)) + " MiB");
}

struct DetectionConfig {
  int n_sites = 14;
  HamiltonianParams hamiltonian{1.0, 1.0, 0.5, true};
  int detector_p = 3;
  int detector_q = 5;
  double tau = 2.0;  ///< units of 1/J
  int steps = 1000;
  FilterSpec filter{};
  double propagator_tol = kDefaultPropagatorTol;

  void validate() const {
    if (n_sites < 2 || n_sites % 2 != 0) throw ValidationError("n_sites must be even and at least 2");
    hamiltonian.validate();
    filter.validate();
    if (!(1 <= detector_p && detector_p < detector_q && detector_q <= n_sites / 2))
      throw ValidationError("detectors must satisfy 1 <= p < q <= N/2, got p = " + std::to_string(detector_p) +
                            ", q = " + std::to_string(detector_q) + ", N = " + std::to_string(n_sites));
    if (!(tau > 0.0) || !std::isfinite(tau)) throw ValidationError("tau must be positive");
    if (steps < 1) throw ValidationError("steps must be at least 1");
  }
};

/// Everything a detection run needs, built once per configuration.
struct DetectionSetup {
  DetectionConfig config;
  std::shared_ptr<const ChainModel> model;
  DiagonalMask signal;     ///< P = n_p n_q
  DiagonalMask no_signal;  ///< Q = 1 - P
  SectorEigensystem q_block;
  StateVector initial;
  ChebyshevPlan plan;

  static DetectionSetup prepare(const DetectionConfig& config) {
    config.validate();
    return prepare(config, std::make_shared<const ChainModel>(ChainModel::build(config.n_sites, config.hamiltonian)));
  }

  /// Reuses a model built for the same N and Hamiltonian parameters.
  static DetectionSetup prepare(const DetectionConfig& config, std::shared_ptr<const ChainModel> model) {
    config.validate();
    if (!model || model->sector.n_sites() != config.n_sites || model->params.hopping != config.hamiltonian.hopping ||
        model->params.interaction != config.hamiltonian.interaction ||
        model->params.impurity != config.hamiltonian.impurity)
      throw ValidationError("chain model does not match the detection configuration");
    DetectionSetup s;
    s.config = config;
    s.model = std::move(model);
    s.signal = projector_mask(s.model->sector, {config.detector_p, config.detector_q});
    s.no_signal = s.signal.complement();
    s.q_block = s.model->block(1);
    s.initial = filtered_initial_state(s.q_block, config.filter);
    s.plan = make_plan(s.model->hamiltonian, config.tau, config.propagator_tol);
    return s;
  }
};

/// Q exp(-i H tau) Q psi, unnormalised.
inline StateVector apply_mq(const ChebyshevPlan& plan, const SparseOperator& h, const DiagonalMask& q,
                            const StateVector& psi) {
  StateVector out = psi;
  q.project(out);
  ChebyshevPropagator(h, plan).apply(out);
  q.project(out);
  return out;
}

struct DetectionSeries {
  /// Values below this are reported clamped; the log is always exact.
  static constexpr double kSurvivalFloor = 1e-290;

  std::vector<double> log_survival;  ///< ln R_k, k = 0..n
  std::vector<double> step_norms;    ///< ||M_Q psi_k|| / ||psi_k||, k = 0..n-1

  [[nodiscard]] int steps() const noexcept { return static_cast<int>(log_survival.size()) - 1; }
  [[nodiscard]] double survival(int k) const {
    return std::max(std::exp(log_survival.at(static_cast<std::size_t>(k))), kSurvivalFloor);
  }
  [[nodiscard]] bool clamped(int k) const {
    return log_survival.at(static_cast<std::size_t>(k)) < std::log(kSurvivalFloor);
  }
  [[nodiscard]] double log10_survival(int k) const {
    return log_survival.at(static_cast<std::size_t>(k)) / std::numbers::ln10;
  }
  /// T_k = 1 - R_k.
  [[nodiscard]] double detection(int k) const {
    return 1.0 - std::exp(log_survival.at(static_cast<std::size_t>(k)));
  }
};

/// R_k for k evolve-then-project cycles applied to psi0. The running state is
/// renormalised every step and ln R_k accumulated, so nothing underflows.
inline DetectionSeries no_detection_series(const ChebyshevPlan& plan, const SparseOperator& h, const DiagonalMask& q,
                                           const StateVector& psi0, int steps) {
  if (steps < 0) throw ValidationError("steps must be nonnegative");
  const double total = psi0.squaredNorm();
  if (!(total > 0.0)) throw ValidationError("initial state is zero");
  const double outside = total - q.weight(psi0);
  if (outside > 1e-12 * total)
    throw ValidationError("initial state has weight " + std::to_string(outside / total) +
                          " on the signal subspace; it must lie in the Q subspace");

  DetectionSeries series;
  series.log_survival.reserve(static_cast<std::size_t>(steps) + 1);
  series.step_norms.reserve(static_cast<std::size_t>(steps));
  series.log_survival.push_back(std::log(total));

  ChebyshevPropagator propagator(h, plan);
  StateVector x = psi0 / std::sqrt(total);
  double log_r = series.log_survival.back();
  for (int k = 1; k <= steps; ++k) {
    propagator.apply(x);
    q.project(x);
    const double kept = x.squaredNorm();
    series.step_norms.push_back(std::sqrt(kept));
    if (kept == 0.0) {
      log_r = -std::numeric_limits<double>::infinity();
      series.log_survival.resize(static_cast<std::size_t>(steps) + 1, log_r);
      series.step_norms.resize(static_cast<std::size_t>(steps), 0.0);
      return series;
    }
    log_r += std::log(kept);
    series.log_survival.push_back(log_r);
    x /= std::sqrt(kept);
  }
  return series;
}

inline DetectionSeries no_detection_series(const DetectionSetup& setup) {
  return no_detection_series(setup.plan, setup.model->hamiltonian, setup.no_signal, setup.initial,
                             setup.config.steps);
}

inline DetectionSeries no_detection_series(const DetectionConfig& config) {
  return no_detection_series(DetectionSetup::prepare(config));
}

/// Values of diagonal observables along measurement-free evolution.
struct DynamicsTrace {
  std::vector<double> times;
  std::vector<Observable> observables;
  std::vector<std::vector<double>> values;  ///< values[t][observable]
};

/// Longest single propagation step used when sampling free dynamics.
inline constexpr double kMaxFreeStep = 5.0;

inline DynamicsTrace free_dynamics(const SparseOperator& h, const FockSector& sector, StateVector psi,
                                   std::span<const double> times, std::span<const Observable> observables,
                                   double tol = kDefaultPropagatorTol, double max_step = kMaxFreeStep) {
  if (!std::is_sorted(times.begin(), times.end())) throw ValidationError("sample times must be ascending");
  if (!times.empty() && times.front() < 0.0) throw ValidationError("sample times must be nonnegative");

  DynamicsTrace trace;
  trace.times.assign(times.begin(), times.end());
  trace.observables.assign(observables.begin(), observables.end());
  std::vector<std::vector<double>> diags;
  diags.reserve(observables.size());
  for (const auto& obs : observables) diags.push_back(observable_diag(sector, obs));

  const SpectralBounds bounds = spectral_bounds(h);
  std::map<double, ChebyshevPlan> plans;
  double now = 0.0;
  for (double t : times) {
    const double dt = t - now;
    if (dt > 0.0) {
      const int substeps = static_cast<int>(std::ceil(dt / max_step));
      const double step = dt / substeps;
      auto it = plans.find(step);
      if (it == plans.end()) it = plans.emplace(step, make_plan(bounds, step, tol)).first;
      ChebyshevPropagator propagator(h, it->second);
      for (int s = 0; s < substeps; ++s) propagator.apply(psi);
      now = t;
    }
    std::vector<double> row;
    row.reserve(diags.size());
    for (const auto& d : diags) row.push_back(expectation(d, psi));
    trace.values.push_back(std::move(row));
  }
  return trace;
}

inline DynamicsTrace free_dynamics(const DetectionSetup& setup, std::span<const double> times,
                                   std::span<const Observable> observables) {
  return free_dynamics(setup.model->hamiltonian, setup.model->sector, setup.initial, times, observables,
                       setup.config.propagator_tol);
}

inline DynamicsTrace free_dynamics(const DetectionConfig& config, std::span<const double> times,
                                   std::span<const Observable> observables) {
  return free_dynamics(DetectionSetup::prepare(config), times, observables);
}

/// <n_p n_q>(t) under free evolution: the probability of a joint click in a
/// single measurement at time t.
inline double single_shot_probability(const DetectionSetup& setup, double t) {
  if (!(t >= 0.0)) throw ValidationError("time must be nonnegative");
  const double times[] = {t};
  const Observable obs[] = {Observable::pair_occupation(setup.config.detector_p, setup.config.detector_q)};
  return free_dynamics(setup, times, obs).values.front().front();
}

inline double single_shot_probability(const DetectionConfig& config, double t) {
  return single_shot_probability(DetectionSetup::prepare(config), t);
}

struct SweepPoint {
  double delta = 0.0;
  double survival = 0.0;  ///< R_n
};

/// R_n over a list of interaction strengths, everything else fixed.
inline std::vector<SweepPoint> survival_sweep(const DetectionConfig& base, std::span<const double> deltas) {
  std::vector<SweepPoint> out;
  out.reserve(deltas.size());
  for (double delta : deltas) {
    DetectionConfig config = base;
    config.hamiltonian.interaction = delta;
    const auto series = no_detection_series(config);
    out.push_back({delta, std::exp(series.log_survival.back())});
  }
  return out;
}

/// Smallest grid Delta with R_n > eps, or nullopt when none qualifies.
inline std::optional<double> transition_point(std::span<const SweepPoint> sweep, double eps = 1e-5) {
  for (std::size_t i = 1; i < sweep.size(); ++i)
    if (!(sweep[i].delta > sweep[i - 1].delta)) throw ValidationError("sweep must be on an ascending Delta grid");
  for (const auto& point : sweep)
    if (point.survival > eps) return point.delta;
  return std::nullopt;
}

}  // namespace qmbdp
