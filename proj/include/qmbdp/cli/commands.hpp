#pragma once

// Subcommands. Each expands the configuration into sweep points, evaluates them
// on a worker pool and assembles CSV artifacts in point order, so the bytes do
// not depend on the number of workers. A failed point leaves a row with its
// status; the run then reports failure.

#include <qmbdp/cli/config.hpp>
#include <qmbdp/cli/manifest.hpp>
#include <qmbdp/cli/svg.hpp>
#include <qmbdp/detection.hpp>
#include <qmbdp/error.hpp>
#include <qmbdp/io.hpp>
#include <qmbdp/krylov.hpp>
#include <qmbdp/operators.hpp>
#include <qmbdp/sector_spectra.hpp>
#include <qmbdp/trajectories.hpp>

#include <atomic>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

namespace qmbdp::cli {

struct CommandResult {
  std::vector<Artifact> artifacts;
  std::size_t failed_points = 0;
};

/// Chain models shared across workers, keyed by (N, Delta, eps0).
class ModelCache {
 public:
  std::shared_ptr<const ChainModel> get(int n_sites, const HamiltonianParams& params) {
    const Key key{n_sites, params.interaction, params.impurity};
    std::shared_future<std::shared_ptr<const ChainModel>> future;
    std::promise<std::shared_ptr<const ChainModel>> promise;
    bool builder = false;
    {
      std::lock_guard lock(mutex_);
      auto it = cache_.find(key);
      if (it == cache_.end()) {
        future = promise.get_future().share();
        cache_.emplace(key, future);
        builder = true;
      } else {
        future = it->second;
      }
    }
    if (builder) {
      try {
        promise.set_value(std::make_shared<const ChainModel>(ChainModel::build(n_sites, params)));
      } catch (...) {
        promise.set_exception(std::current_exception());
      }
    }
    return future.get();
  }

 private:
  using Key = std::tuple<int, double, double>;
  std::mutex mutex_;
  std::map<Key, std::shared_future<std::shared_ptr<const ChainModel>>> cache_;
};

/// Runs fn(i) for i < count on `threads` workers; result i is either a value
/// or the message of the exception it threw.
template <class R>
struct Outcome {
  std::optional<R> value;
  std::string error;
};

template <class R>
std::vector<Outcome<R>> run_pool(std::size_t count, unsigned threads, const std::function<R(std::size_t)>& fn) {
  std::vector<Outcome<R>> out(count);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        out[i].value.emplace(fn(i));
      } catch (const std::exception& e) {
        out[i].error = e.what();
      }
    }
  };
  const unsigned n = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(count, 1))));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < n; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  return out;
}

struct SweepPoint3 {
  double delta = 0.0;
  double tau = 0.0;
};

inline std::vector<SweepPoint3> sweep_points(const RunConfig& c, bool over_tau) {
  std::vector<SweepPoint3> out;
  const std::vector<double> taus = over_tau ? c.taus : std::vector<double>{c.taus.front()};
  for (double tau : taus)
    for (double delta : c.deltas) out.push_back({delta, tau});
  return out;
}

inline std::string failure_status(const std::string& message) { return "failed: " + message; }

class Runner {
 public:
  Runner(RunConfig config, unsigned threads) : c_(std::move(config)), threads_(std::max(1u, threads)) {}

  [[nodiscard]] const RunConfig& config() const noexcept { return c_; }

  CommandResult run(const std::string& command) {
    if (command == "gaps") return gaps();
    if (command == "lambda1") return lambda1();
    if (command == "rn") return rn(false);
    if (command == "transition") return rn(true);
    if (command == "dynamics") return dynamics();
    if (command == "trajectory") return trajectory();
    if (command == "singleshot") return singleshot();
    if (command == "operator") return dump_operator();
    throw ValidationError("unknown subcommand '" + command + "'");
  }

 private:
  DetectionSetup setup(const SweepPoint3& p) {
    DetectionConfig d = c_.detection;
    d.hamiltonian.interaction = p.delta;
    d.tau = p.tau;
    return DetectionSetup::prepare(d, models_.get(d.n_sites, d.hamiltonian));
  }

  std::string n_sites() const { return format_number(c_.detection.n_sites); }

  void add_table(CommandResult& r, const std::string& file, const CsvTable& t, const std::string& plot) const {
    r.artifacts.push_back({file, t.str()});
    if (c_.svg && !plot.empty()) {
      std::string stem = file.substr(0, file.rfind('.'));
      r.artifacts.push_back({stem + ".svg", plot_csv(t, plot, c_.plot_floor)});
    }
  }

  CommandResult gaps() {
    const auto points = sweep_points(c_, false);
    auto outcomes = run_pool<VvptGapTable>(points.size(), threads_, [&](std::size_t i) {
      HamiltonianParams h = c_.detection.hamiltonian;
      h.interaction = points[i].delta;
      return models_.get(c_.detection.n_sites, h)->gaps(c_.thresholds);
    });
    CsvTable t({"n_sites", "delta[J]", "alpha", "alpha_mid", "E_alpha[J]", "g_alpha", "flagged", "status"});
    CommandResult r;
    for (std::size_t i = 0; i < points.size(); ++i) {
      const std::string delta = format_number(points[i].delta);
      if (!outcomes[i].value) {
        ++r.failed_points;
        t.add({n_sites(), delta, "", "", "", "", "", failure_status(outcomes[i].error)});
        continue;
      }
      const VvptGapTable& g = *outcomes[i].value;
      std::vector<int> alphas;
      if (c_.gap_alphas.empty()) {
        for (const auto& e : g.entries) alphas.push_back(e.alpha);
      } else {
        for (const auto& a : c_.gap_alphas) alphas.push_back(a == "mid" ? g.alpha_mid : std::stoi(a));
      }
      for (int a : alphas) {
        if (a < 0 || static_cast<std::size_t>(a) >= g.entries.size()) {
          ++r.failed_points;
          t.add({n_sites(), delta, format_number(a), format_number(g.alpha_mid), "", "", "",
                 failure_status("alpha out of range")});
          continue;
        }
        const GapEntry& e = g.at(a);
        t.add({n_sites(), delta, format_number(e.alpha), format_number(g.alpha_mid), format_number(e.energy),
               format_number(e.gap), e.flagged ? "1" : "0", "ok"});
      }
    }
    add_table(r, "gaps.csv", t, "gaps");
    return r;
  }

  CommandResult lambda1() {
    const auto points = sweep_points(c_, true);
    auto outcomes = run_pool<SpectralEstimate>(points.size(), threads_, [&](std::size_t i) {
      return leading_decay(setup(points[i]), c_.arnoldi);
    });
    CsvTable t({"n_sites", "delta[J]", "tau[1/J]", "lambda1[1/step]", "theta1[rad]", "converged", "restarts",
                "residual", "status"});
    CommandResult r;
    for (std::size_t i = 0; i < points.size(); ++i) {
      const auto& o = outcomes[i];
      if (!o.value) {
        ++r.failed_points;
        t.add({n_sites(), format_number(points[i].delta), format_number(points[i].tau), "", "", "", "", "",
               failure_status(o.error)});
        continue;
      }
      const SpectralEstimate& e = *o.value;
      // A flagged (unconverged) estimate is still written, and marks the run failed.
      if (!e.converged) ++r.failed_points;
      t.add({n_sites(), format_number(points[i].delta), format_number(points[i].tau), format_number(e.decay_rate),
             format_number(e.phase), e.converged ? "1" : "0", format_number(e.restarts), format_number(e.residual),
             e.converged ? "ok" : "not converged"});
    }
    add_table(r, "lambda1.csv", t, "lambda1");
    return r;
  }

  struct RnResult {
    DetectionSeries series;
    std::optional<SpectralEstimate> lambda;
  };

  CommandResult rn(bool transition) {
    const auto points = sweep_points(c_, true);
    const bool with_lambda = c_.rn_lambda1 && !transition;
    auto outcomes = run_pool<RnResult>(points.size(), threads_, [&](std::size_t i) {
      const DetectionSetup s = setup(points[i]);
      RnResult res{no_detection_series(s), std::nullopt};
      if (with_lambda) res.lambda = leading_decay(s, c_.arnoldi);
      return res;
    });

    std::vector<std::string> header = {"n_sites", "delta[J]", "tau[1/J]", "steps", "R_n", "T_n", "log10_R_n"};
    if (with_lambda) header.insert(header.end(), {"lambda1[1/step]", "lambda1_converged"});
    header.push_back("status");
    CsvTable t(header);
    CsvTable series({"n_sites", "delta[J]", "tau[1/J]", "k", "R_k", "T_k"});
    CommandResult r;
    const std::string steps = format_number(c_.detection.steps);
    for (std::size_t i = 0; i < points.size(); ++i) {
      const auto& o = outcomes[i];
      std::vector<std::string> row = {n_sites(), format_number(points[i].delta), format_number(points[i].tau), steps};
      if (!o.value) {
        ++r.failed_points;
        row.resize(header.size(), "");
        row.back() = failure_status(o.error);
        t.add(row);
        continue;
      }
      const DetectionSeries& s = o.value->series;
      const int n = s.steps();
      row.insert(row.end(), {format_number(std::exp(s.log_survival.back())), format_number(s.detection(n)),
                             format_number(s.log10_survival(n))});
      if (with_lambda) {
        const SpectralEstimate& e = *o.value->lambda;
        row.insert(row.end(), {format_number(e.decay_rate), e.converged ? "1" : "0"});
      }
      row.push_back("ok");
      t.add(row);
      if (c_.series_stride > 0 && !transition)
        for (int k = 0; k <= n; k += c_.series_stride)
          series.add({n_sites(), format_number(points[i].delta), format_number(points[i].tau), format_number(k),
                      format_number(std::exp(s.log_survival[static_cast<std::size_t>(k)])),
                      format_number(s.detection(k))});
    }

    if (!transition) {
      add_table(r, "rn.csv", t, "rn");
      if (c_.series_stride > 0) add_table(r, "series.csv", series, "series");
      return r;
    }

    add_table(r, "transition_sweep.csv", t, "transition");
    CsvTable d({"n_sites", "tau[1/J]", "epsilon", "steps", "delta_star[J]", "status"});
    std::vector<double> taus;
    for (const auto& p : points)
      if (std::find(taus.begin(), taus.end(), p.tau) == taus.end()) taus.push_back(p.tau);
    for (double tau : taus) {
      std::vector<SweepPoint> sweep;
      bool complete = true;
      for (std::size_t i = 0; i < points.size(); ++i) {
        if (points[i].tau != tau) continue;
        if (!outcomes[i].value) {
          complete = false;
          continue;
        }
        sweep.push_back({points[i].delta, std::exp(outcomes[i].value->series.log_survival.back())});
      }
      std::sort(sweep.begin(), sweep.end(), [](const SweepPoint& a, const SweepPoint& b) { return a.delta < b.delta; });
      std::string status = complete ? "ok" : "failed: incomplete sweep";
      std::string star;
      try {
        const auto found = transition_point(sweep, c_.epsilon);
        star = found ? format_number(*found) : "none";
      } catch (const std::exception& e) {
        status = failure_status(e.what());
      }
      if (status != "ok") ++r.failed_points;
      d.add({n_sites(), format_number(tau), format_number(c_.epsilon), steps, star, status});
    }
    r.artifacts.push_back({"transition.csv", d.str()});
    return r;
  }

  CommandResult dynamics() {
    c_.check_observables();
    const auto points = sweep_points(c_, false);
    auto outcomes = run_pool<DynamicsTrace>(points.size(), threads_, [&](std::size_t i) {
      return free_dynamics(setup(points[i]), c_.times, c_.observables);
    });
    std::vector<std::string> header = {"n_sites", "delta[J]", "t[1/J]"};
    for (const auto& o : c_.observables) header.push_back(o.name());
    header.push_back("status");
    CsvTable t(header);
    CommandResult r;
    for (std::size_t i = 0; i < points.size(); ++i) {
      const auto& o = outcomes[i];
      if (!o.value) {
        ++r.failed_points;
        std::vector<std::string> row = {n_sites(), format_number(points[i].delta)};
        row.resize(header.size(), "");
        row.back() = failure_status(o.error);
        t.add(row);
        continue;
      }
      for (std::size_t k = 0; k < o.value->times.size(); ++k) {
        std::vector<std::string> row = {n_sites(), format_number(points[i].delta), format_number(o.value->times[k])};
        for (double v : o.value->values[k]) row.push_back(format_number(v));
        row.push_back("ok");
        t.add(row);
      }
    }
    const bool plottable = std::any_of(c_.observables.begin(), c_.observables.end(),
                                       [](const Observable& o) { return o.kind == Observable::Kind::RightHalfCount; });
    add_table(r, "dynamics.csv", t, plottable ? "dynamics" : "");
    return r;
  }

  CommandResult trajectory() {
    const auto points = sweep_points(c_, true);
    auto outcomes = run_pool<TrajectoryEnsemble>(points.size(), threads_, [&](std::size_t i) {
      return trajectory_ensemble(setup(points[i]), c_.trajectories, c_.master_seed, 1);
    });
    CsvTable t({"n_sites", "delta[J]", "tau[1/J]", "trajectory_index", "seed", "C", "status"});
    CsvTable summary({"n_sites", "delta[J]", "tau[1/J]", "trajectories", "mean_C", "min_C", "max_C", "P_C0",
                      "aborted", "status"});
    CsvTable clicks({"n_sites", "delta[J]", "tau[1/J]", "trajectory_index", "step"});
    CommandResult r;
    for (std::size_t i = 0; i < points.size(); ++i) {
      const auto& o = outcomes[i];
      const std::string delta = format_number(points[i].delta);
      const std::string tau = format_number(points[i].tau);
      if (!o.value) {
        ++r.failed_points;
        t.add({n_sites(), delta, tau, "", "", "", failure_status(o.error)});
        summary.add({n_sites(), delta, tau, "", "", "", "", "", "", failure_status(o.error)});
        continue;
      }
      for (const auto& rec : o.value->records) {
        t.add({n_sites(), delta, tau, format_number(static_cast<unsigned long long>(rec.index)),
               format_number(static_cast<unsigned long long>(rec.seed)), format_number(rec.clicks),
               rec.aborted ? failure_status(rec.diagnostic) : "ok"});
        if (c_.click_times)
          for (int step : rec.click_steps)
            clicks.add({n_sites(), delta, tau, format_number(static_cast<unsigned long long>(rec.index)),
                        format_number(step)});
      }
      const EnsembleSummary& s = o.value->summary;
      if (s.aborted > 0) ++r.failed_points;
      summary.add({n_sites(), delta, tau, format_number(static_cast<unsigned long long>(s.trajectories)),
                   format_number(s.mean_clicks), format_number(s.min_clicks), format_number(s.max_clicks),
                   format_number(s.zero_click_fraction), format_number(static_cast<unsigned long long>(s.aborted)),
                   s.aborted == 0 ? "ok" : "aborted trajectories"});
    }
    add_table(r, "trajectories.csv", t, "trajectory");
    r.artifacts.push_back({"trajectory_summary.csv", summary.str()});
    if (c_.click_times) r.artifacts.push_back({"click_times.csv", clicks.str()});
    return r;
  }

  CommandResult singleshot() {
    const auto points = sweep_points(c_, false);
    auto outcomes = run_pool<double>(points.size(), threads_, [&](std::size_t i) {
      return single_shot_probability(setup(points[i]), c_.singleshot_time);
    });
    CsvTable t({"n_sites", "delta[J]", "t[1/J]", "P_pq", "status"});
    CommandResult r;
    for (std::size_t i = 0; i < points.size(); ++i) {
      const auto& o = outcomes[i];
      if (!o.value) ++r.failed_points;
      t.add({n_sites(), format_number(points[i].delta), format_number(c_.singleshot_time),
             o.value ? format_number(*o.value) : "", o.value ? "ok" : failure_status(o.error)});
    }
    add_table(r, "singleshot.csv", t, "singleshot");
    return r;
  }

  CommandResult dump_operator() {
    const auto points = sweep_points(c_, false);
    CommandResult r;
    for (std::size_t i = 0; i < points.size(); ++i) {
      HamiltonianParams h = c_.detection.hamiltonian;
      h.interaction = points[i].delta;
      const auto model = models_.get(c_.detection.n_sites, h);
      std::ostringstream out;
      out << "# " << c_.operator_which << " N=" << c_.detection.n_sites << " delta=" << format_number(points[i].delta)
          << " epsilon0=" << format_number(h.impurity) << "\n";
      if (c_.operator_which == "H")
        model->hamiltonian.write_triplets(out);
      else if (c_.operator_which == "H0")
        model->cut_hamiltonian.write_triplets(out);
      else if (c_.operator_which == "H1")
        model->boundary_term.write_triplets(out);
      else
        build_spin_equivalent(model->sector, h).write_triplets(out);
      r.artifacts.push_back({"operator_" + c_.operator_which + "_" + format_number(static_cast<unsigned long long>(i)) + ".txt",
                             out.str()});
    }
    return r;
  }

  RunConfig c_;
  unsigned threads_;
  ModelCache models_;
};

}  // namespace qmbdp::cli
