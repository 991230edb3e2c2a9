#pragma once

// Run configuration: flat `section.key = value` settings, read from an INI-like
// file ([section] headers, # or ; comments) and --set overrides. Every key has
// a default; unknown keys are rejected.

#include <qmbdp/detection.hpp>
#include <qmbdp/error.hpp>
#include <qmbdp/io.hpp>
#include <qmbdp/krylov.hpp>
#include <qmbdp/operators.hpp>
#include <qmbdp/sector_spectra.hpp>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace qmbdp::cli {

struct KeySpec {
  std::string key;
  std::string value;  ///< default
  std::string help;
};

inline const std::vector<KeySpec>& key_table() {
  static const std::vector<KeySpec> table = {
      {"chain.sites", "14", "number of sites N (even); half filling"},
      {"chain.J", "1", "hopping; the energy unit, must be 1"},
      {"chain.epsilon0", "0.5", "impurity potential on site 0 [J]"},
      {"detector.p", "3", "first detector site (1..N/2)"},
      {"detector.q", "5", "second detector site (p < q <= N/2)"},
      {"detector.steps", "1000", "measurement cycles n"},
      {"filter.energy", "ground", "ground, mid, or an energy [J]"},
      {"filter.sigma", "0.1", "filter width [J]"},
      {"filter.seed", "1", "seed of the random state being filtered"},
      {"solver.propagator_tol", "1e-12", "Chebyshev truncation tolerance"},
      {"solver.krylov_dim", "30", "Arnoldi basis size m"},
      {"solver.krylov_kept", "0", "Schur vectors kept per restart; 0 means m/2"},
      {"solver.max_restarts", "50", "Arnoldi restart limit"},
      {"solver.arnoldi_tol", "1e-8", "Arnoldi convergence tolerance"},
      {"solver.arnoldi_seed", "1", "seed of the Arnoldi start vector"},
      {"sweep.deltas", "0.5, 0.9, 1.1, 2.0", "interaction strengths Delta [J]"},
      {"sweep.taus", "2", "measurement intervals tau [1/J]"},
      {"run.seed", "1", "master seed for trajectories"},
      {"run.max_memory_gb", "4", "refuse chains whose estimated footprint exceeds this"},
      {"gaps.degeneracy", "1e-10", "energy differences below this are degenerate [J]"},
      {"gaps.coupling", "1e-12", "couplings below this count as zero [J]"},
      {"gaps.alphas", "", "alpha values to write (integers or 'mid'); empty writes all"},
      {"dynamics.t_max", "200", "last sample time [1/J]"},
      {"dynamics.t_step", "1", "sample spacing [1/J]"},
      {"dynamics.observables", "N_R, n_3, n_3*n_5", "N_R, n_<site> or n_<p>*n_<q>"},
      {"trajectory.count", "4", "trajectories per sweep point"},
      {"trajectory.click_times", "false", "also write every click step"},
      {"singleshot.time", "2000", "measurement time [1/J]"},
      {"transition.epsilon", "1e-5", "R_n threshold defining Delta*"},
      {"rn.series_stride", "0", "write R_k every this many steps; 0 disables"},
      {"rn.lambda1", "false", "add the Arnoldi decay rate to the rn table"},
      {"operator.which", "H", "H, H0, H1 or spin"},
      {"plot.svg", "true", "write an SVG next to the main CSV"},
      {"plot.floor", "1e-300", "log-scale plots clamp smaller values to this"},
  };
  return table;
}

inline std::string trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return std::string(s);
}

inline std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  if (trim(s).empty()) return out;
  std::size_t start = 0;
  for (;;) {
    const auto comma = s.find(',', start);
    out.push_back(trim(s.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

class Settings {
 public:
  Settings() {
    for (const auto& k : key_table()) values_[k.key] = k.value;
  }

  void set(const std::string& key, const std::string& value, std::string_view origin = "override") {
    auto it = values_.find(key);
    if (it == values_.end()) throw ValidationError(std::string(origin) + ": unknown key '" + key + "'");
    it->second = value;
  }

  /// `key=value`.
  void apply_override(std::string_view assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string_view::npos) throw ValidationError("--set expects key=value, got '" + std::string(assignment) + "'");
    set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)), "--set");
  }

  void load_ini(std::string_view text, const std::string& origin) {
    std::string section;
    int line_no = 0;
    while (!text.empty()) {
      ++line_no;
      const auto nl = text.find('\n');
      std::string line(text.substr(0, nl));
      text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
      const auto comment = line.find_first_of("#;");
      if (comment != std::string::npos) line.erase(comment);
      line = trim(line);
      if (line.empty()) continue;
      const std::string where = origin + ":" + std::to_string(line_no);
      if (line.front() == '[') {
        if (line.back() != ']') throw ValidationError(where + ": malformed section header");
        section = trim(std::string_view(line).substr(1, line.size() - 2));
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw ValidationError(where + ": expected key = value");
      std::string key = trim(std::string_view(line).substr(0, eq));
      if (!section.empty()) key = section + "." + key;
      set(key, trim(std::string_view(line).substr(eq + 1)), where);
    }
  }

  [[nodiscard]] const std::map<std::string, std::string>& values() const noexcept { return values_; }
  [[nodiscard]] const std::string& get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ValidationError("unknown key '" + key + "'");
    return it->second;
  }

  [[nodiscard]] double get_double(const std::string& key) const {
    try {
      return parse_number(get(key));
    } catch (const ValidationError&) {
      throw ValidationError(key + ": expected a number, got '" + get(key) + "'");
    }
  }

  [[nodiscard]] long long get_int(const std::string& key) const {
    const std::string& text = get(key);
    long long v = 0;
    const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    if (res.ec != std::errc{} || res.ptr != text.data() + text.size())
      throw ValidationError(key + ": expected an integer, got '" + text + "'");
    return v;
  }

  [[nodiscard]] std::uint64_t get_seed(const std::string& key) const {
    const std::string& text = get(key);
    std::uint64_t v = 0;
    const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    if (res.ec != std::errc{} || res.ptr != text.data() + text.size())
      throw ValidationError(key + ": expected a nonnegative integer seed, got '" + text + "'");
    return v;
  }

  [[nodiscard]] bool get_bool(const std::string& key) const {
    const std::string& v = get(key);
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ValidationError(key + ": expected true or false, got '" + v + "'");
  }

  [[nodiscard]] std::vector<double> get_list(const std::string& key) const {
    std::vector<double> out;
    for (const auto& item : split_list(get(key))) {
      try {
        out.push_back(parse_number(item));
      } catch (const ValidationError&) {
        throw ValidationError(key + ": '" + item + "' is not a number");
      }
    }
    return out;
  }

 private:
  std::map<std::string, std::string> values_;
};

/// "N_R", "n_3", "n_3*n_5".
inline Observable parse_observable(std::string_view text) {
  const std::string s = trim(text);
  auto site = [&](std::string_view part) {
    if (part.size() < 3 || part.substr(0, 2) != "n_") throw ValidationError("unknown observable '" + s + "'");
    int v = 0;
    const auto body = part.substr(2);
    const auto res = std::from_chars(body.data(), body.data() + body.size(), v);
    if (res.ec != std::errc{} || res.ptr != body.data() + body.size())
      throw ValidationError("unknown observable '" + s + "'");
    return v;
  };
  if (s == "N_R") return Observable::right_half_count();
  const auto star = s.find('*');
  if (star == std::string::npos) return Observable::site_occupation(site(s));
  return Observable::pair_occupation(site(std::string_view(s).substr(0, star)),
                                     site(std::string_view(s).substr(star + 1)));
}

/// Settings resolved into typed parameters.
struct RunConfig {
  DetectionConfig detection;  ///< interaction and tau are set per sweep point
  std::vector<double> deltas;
  std::vector<double> taus;
  ArnoldiOptions arnoldi;
  GapThresholds thresholds;
  std::vector<std::string> gap_alphas;
  std::vector<double> times;
  std::vector<Observable> observables;
  std::size_t trajectories = 4;
  bool click_times = false;
  std::uint64_t master_seed = 1;
  double singleshot_time = 2000.0;
  double epsilon = 1e-5;
  int series_stride = 0;
  bool rn_lambda1 = false;
  std::string operator_which = "H";
  bool svg = true;
  double plot_floor = 1e-300;

  /// Observables only matter to the dynamics command, so their sites are
  /// checked there rather than for every run.
  void check_observables() const {
    const int lo = -detection.n_sites / 2 + 1;
    const int hi = detection.n_sites / 2;
    for (const auto& obs : observables) {
      const bool uses_sites = obs.kind != Observable::Kind::RightHalfCount;
      const bool pair = obs.kind == Observable::Kind::PairOccupation;
      if ((uses_sites && (obs.site < lo || obs.site > hi)) || (pair && (obs.other_site < lo || obs.other_site > hi)))
        throw ValidationError("dynamics.observables: " + obs.name() + " refers to a site outside [" +
                              std::to_string(lo) + ", " + std::to_string(hi) + "]");
    }
  }

  static RunConfig from(const Settings& s) {
    RunConfig c;
    const double j = s.get_double("chain.J");
    if (j != 1.0) throw ValidationError("chain.J: energies are in units of J, so J must be 1");
    const long long sites = s.get_int("chain.sites");
    if (sites < 2 || sites > 62) throw ValidationError("chain.sites must be between 2 and 62");
    c.detection.n_sites = static_cast<int>(sites);
    const double memory_gb = s.get_double("run.max_memory_gb");
    if (!(memory_gb > 0.0)) throw ValidationError("run.max_memory_gb must be positive");
    check_run_capacity(c.detection.n_sites, memory_gb * 1073741824.0);
    c.detection.hamiltonian = {1.0, 0.0, s.get_double("chain.epsilon0"), true};
    c.detection.detector_p = static_cast<int>(s.get_int("detector.p"));
    c.detection.detector_q = static_cast<int>(s.get_int("detector.q"));
    const long long steps = s.get_int("detector.steps");
    if (steps < 1 || steps > 100000000) throw ValidationError("detector.steps must be between 1 and 1e8");
    c.detection.steps = static_cast<int>(steps);

    const std::string energy = s.get("filter.energy");
    if (energy == "ground")
      c.detection.filter.target = EnergyTarget::ground();
    else if (energy == "mid")
      c.detection.filter.target = EnergyTarget::mid();
    else
      c.detection.filter.target = EnergyTarget::explicit_energy(s.get_double("filter.energy"));
    c.detection.filter.width = s.get_double("filter.sigma");
    c.detection.filter.seed = s.get_seed("filter.seed");
    c.detection.propagator_tol = s.get_double("solver.propagator_tol");
    if (!(c.detection.propagator_tol >= kMinPropagatorTol && c.detection.propagator_tol < 1.0))
      throw ValidationError("solver.propagator_tol must be in [" + format_number(kMinPropagatorTol) + ", 1)");

    c.arnoldi.krylov_dim = static_cast<int>(s.get_int("solver.krylov_dim"));
    c.arnoldi.kept = static_cast<int>(s.get_int("solver.krylov_kept"));
    c.arnoldi.max_restarts = static_cast<int>(s.get_int("solver.max_restarts"));
    c.arnoldi.tol = s.get_double("solver.arnoldi_tol");
    c.arnoldi.seed = s.get_seed("solver.arnoldi_seed");
    if (c.arnoldi.krylov_dim < 10) throw ValidationError("solver.krylov_dim must be at least 10");
    if (c.arnoldi.kept < 0 || c.arnoldi.kept >= c.arnoldi.krylov_dim)
      throw ValidationError("solver.krylov_kept must be in [0, krylov_dim)");
    if (c.arnoldi.max_restarts < 0) throw ValidationError("solver.max_restarts must be nonnegative");
    if (!(c.arnoldi.tol > 0.0)) throw ValidationError("solver.arnoldi_tol must be positive");

    c.deltas = s.get_list("sweep.deltas");
    if (c.deltas.empty()) throw ValidationError("sweep.deltas is empty");
    c.taus = s.get_list("sweep.taus");
    if (c.taus.empty()) throw ValidationError("sweep.taus is empty");
    for (double t : c.taus)
      if (!(t > 0.0) || !std::isfinite(t)) throw ValidationError("sweep.taus must be positive");
    for (double d : c.deltas)
      if (!std::isfinite(d)) throw ValidationError("sweep.deltas must be finite");
    c.master_seed = s.get_seed("run.seed");

    c.thresholds.degeneracy = s.get_double("gaps.degeneracy");
    c.thresholds.coupling = s.get_double("gaps.coupling");
    if (!(c.thresholds.degeneracy >= 0.0) || !(c.thresholds.coupling >= 0.0))
      throw ValidationError("gap thresholds must be nonnegative");
    c.gap_alphas = split_list(s.get("gaps.alphas"));
    for (const auto& a : c.gap_alphas) {
      if (a == "mid") continue;
      int v = -1;
      const auto res = std::from_chars(a.data(), a.data() + a.size(), v);
      if (res.ec != std::errc{} || res.ptr != a.data() + a.size() || v < 0)
        throw ValidationError("gaps.alphas: '" + a + "' is neither a nonnegative integer nor 'mid'");
    }

    const double t_max = s.get_double("dynamics.t_max");
    const double t_step = s.get_double("dynamics.t_step");
    if (!(t_max >= 0.0) || !(t_step > 0.0) || !std::isfinite(t_max))
      throw ValidationError("dynamics.t_max must be nonnegative and dynamics.t_step positive");
    const double samples = std::floor(t_max / t_step + 1e-9);
    if (samples > 1e6) throw ValidationError("dynamics: more than 1e6 sample times");
    for (long long i = 0; i <= static_cast<long long>(samples); ++i) c.times.push_back(static_cast<double>(i) * t_step);
    for (const auto& item : split_list(s.get("dynamics.observables"))) c.observables.push_back(parse_observable(item));
    if (c.observables.empty()) throw ValidationError("dynamics.observables is empty");
    const long long count = s.get_int("trajectory.count");
    if (count < 1) throw ValidationError("trajectory.count must be at least 1");
    c.trajectories = static_cast<std::size_t>(count);
    c.click_times = s.get_bool("trajectory.click_times");
    c.singleshot_time = s.get_double("singleshot.time");
    if (!(c.singleshot_time >= 0.0)) throw ValidationError("singleshot.time must be nonnegative");
    c.epsilon = s.get_double("transition.epsilon");
    if (!(c.epsilon > 0.0 && c.epsilon < 1.0)) throw ValidationError("transition.epsilon must be in (0, 1)");
    c.series_stride = static_cast<int>(s.get_int("rn.series_stride"));
    if (c.series_stride < 0) throw ValidationError("rn.series_stride must be nonnegative");
    c.rn_lambda1 = s.get_bool("rn.lambda1");
    c.operator_which = s.get("operator.which");
    if (c.operator_which != "H" && c.operator_which != "H0" && c.operator_which != "H1" && c.operator_which != "spin")
      throw ValidationError("operator.which must be H, H0, H1 or spin");
    c.svg = s.get_bool("plot.svg");
    c.plot_floor = s.get_double("plot.floor");
    if (!(c.plot_floor > 0.0)) throw ValidationError("plot.floor must be positive");

    DetectionConfig probe = c.detection;
    probe.tau = c.taus.front();
    probe.validate();
    return c;
  }
};

}  // namespace qmbdp::cli
