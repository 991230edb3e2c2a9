#pragma once

// Single experimental runs with two stroboscopic detectors: evolve by tau, draw
// r, click with probability <n_p n_q>, collapse, renormalise; the counter C
// records how often the signal was seen.

#include <qmbdp/detection.hpp>
#include <qmbdp/error.hpp>
#include <qmbdp/operators.hpp>
#include <qmbdp/propagator.hpp>
#include <qmbdp/random.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace qmbdp {

/// Projected norms below this mean a branch of zero probability was drawn.
inline constexpr double kCollapseFloor = 1e-14;

struct TrajectoryRecord {
  std::size_t index = 0;
  std::uint64_t seed = 0;
  int steps = 0;
  int clicks = 0;                ///< C
  std::vector<int> click_steps;  ///< 1-based step indices, strictly increasing
  double max_norm_error = 0.0;   ///< max | ||psi_k|| - 1 | after renormalisation
  bool aborted = false;
  std::string diagnostic;
};

/// Called after every step with the step index (1-based) and the state.
using StepObserver = std::function<void(int, const StateVector&)>;

/// One run. With `project` false the click probability is computed and the
/// draw made, but the state is never collapsed.
inline TrajectoryRecord run_trajectory(const ChebyshevPlan& plan, const SparseOperator& h, const DiagonalMask& signal,
                                       const StateVector& psi0, int steps, std::uint64_t seed, bool project = true,
                                       const StepObserver& observer = {}) {
  if (steps < 0) throw ValidationError("steps must be nonnegative");
  if (std::abs(psi0.norm() - 1.0) > 1e-10) throw ValidationError("initial state must be normalised");

  TrajectoryRecord rec;
  rec.seed = seed;
  rec.steps = steps;
  RandomStream rng(seed);
  ChebyshevPropagator propagator(h, plan);
  const DiagonalMask no_signal = signal.complement();
  StateVector psi = psi0;
  for (int k = 1; k <= steps; ++k) {
    propagator.apply(psi);
    const double a = signal.weight(psi);
    const double r = rng.uniform();
    const bool click = r <= a;
    if (click) {
      ++rec.clicks;
      rec.click_steps.push_back(k);
    }
    if (project) {
      if (click)
        signal.project(psi);
      else
        no_signal.project(psi);
      const double norm = psi.norm();
      if (norm < kCollapseFloor) {
        rec.aborted = true;
        rec.diagnostic = "step " + std::to_string(k) + ": projected norm " + std::to_string(norm) + " after " +
                         (click ? "click" : "no click") + " with a = " + std::to_string(a) + ", r = " +
                         std::to_string(r);
        rec.steps = k;
        return rec;
      }
      psi /= norm;
    }
    rec.max_norm_error = std::max(rec.max_norm_error, std::abs(psi.norm() - 1.0));
    if (observer) observer(k, psi);
  }
  return rec;
}

inline std::uint64_t trajectory_seed(std::uint64_t master, std::size_t index) { return derive_seed(master, index); }

inline TrajectoryRecord run_trajectory(const DetectionSetup& setup, std::uint64_t seed) {
  return run_trajectory(setup.plan, setup.model->hamiltonian, setup.signal, setup.initial, setup.config.steps, seed);
}

inline TrajectoryRecord run_trajectory(const DetectionConfig& config, std::uint64_t seed) {
  return run_trajectory(DetectionSetup::prepare(config), seed);
}

struct EnsembleSummary {
  std::size_t trajectories = 0;
  std::size_t aborted = 0;
  double mean_clicks = 0.0;  ///< over completed trajectories
  int min_clicks = 0;
  int max_clicks = 0;
  double zero_click_fraction = 0.0;  ///< P(C = 0) over completed trajectories
};

struct TrajectoryEnsemble {
  std::vector<TrajectoryRecord> records;  ///< ordered by index
  EnsembleSummary summary;
};

inline EnsembleSummary summarize(const std::vector<TrajectoryRecord>& records) {
  EnsembleSummary s;
  s.trajectories = records.size();
  std::size_t done = 0;
  std::size_t zero = 0;
  double total = 0.0;
  s.min_clicks = std::numeric_limits<int>::max();
  for (const auto& r : records) {
    if (r.aborted) {
      ++s.aborted;
      continue;
    }
    ++done;
    total += r.clicks;
    zero += r.clicks == 0 ? 1 : 0;
    s.min_clicks = std::min(s.min_clicks, r.clicks);
    s.max_clicks = std::max(s.max_clicks, r.clicks);
  }
  if (done == 0) {
    s.min_clicks = 0;
    return s;
  }
  s.mean_clicks = total / static_cast<double>(done);
  s.zero_click_fraction = static_cast<double>(zero) / static_cast<double>(done);
  return s;
}

/// Trajectories i = 0..n-1 with seeds derived from (master_seed, i). Output
/// does not depend on `threads`.
inline TrajectoryEnsemble trajectory_ensemble(const DetectionSetup& setup, std::size_t n_traj,
                                              std::uint64_t master_seed, unsigned threads = 1) {
  if (n_traj < 1) throw ValidationError("n_traj must be at least 1");
  TrajectoryEnsemble out;
  out.records.resize(n_traj);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < n_traj; i = next++) {
      try {
        TrajectoryRecord rec = run_trajectory(setup, trajectory_seed(master_seed, i));
        rec.index = i;
        out.records[i] = std::move(rec);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const unsigned workers = std::clamp<unsigned>(threads, 1, static_cast<unsigned>(std::min<std::size_t>(n_traj, 256)));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < workers; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  out.summary = summarize(out.records);
  return out;
}

inline TrajectoryEnsemble trajectory_ensemble(const DetectionConfig& config, std::size_t n_traj,
                                              std::uint64_t master_seed, unsigned threads = 1) {
  return trajectory_ensemble(DetectionSetup::prepare(config), n_traj, master_seed, threads);
}

}  // namespace qmbdp
