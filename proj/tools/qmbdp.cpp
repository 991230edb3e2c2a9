// qmbdp: sweeps of the detection-probability simulator.
//
//   qmbdp rn --config run.ini --set sweep.deltas=0.5,1,2 --out-dir out
//   qmbdp plot out/rn.csv --kind rn
//
// Exit status: 0 success, 1 invalid input, 2 runtime failure (including any
// failed sweep point).

#include <qmbdp/cli/commands.hpp>
#include <qmbdp/cli/config.hpp>
#include <qmbdp/cli/manifest.hpp>
#include <qmbdp/cli/svg.hpp>
#include <qmbdp/io.hpp>

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

namespace fs = std::filesystem;
using namespace qmbdp;

namespace {

constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;

struct Options {
  std::string config_file;
  std::vector<std::string> overrides;
  std::string out_dir = ".";
  unsigned threads = std::max(1u, std::thread::hardware_concurrency());
  std::optional<std::uint64_t> seed;
  std::string csv;
  std::string kind;
};

cli::Settings load_settings(const Options& o) {
  cli::Settings s;
  if (!o.config_file.empty()) s.load_ini(read_file(o.config_file), o.config_file);
  for (const auto& kv : o.overrides) s.apply_override(kv);
  if (o.seed) s.set("run.seed", std::to_string(*o.seed), "--seed");
  return s;
}

void write_outputs(const Options& o, cli::RunManifest& manifest, const std::vector<cli::Artifact>& artifacts) {
  const fs::path dir(o.out_dir);
  for (const auto& a : artifacts) {
    write_file_atomic(dir / a.file, a.content);
    manifest.add(a);
    std::cerr << "wrote " << (dir / a.file).string() << "\n";
  }
  manifest.finished = cli::utc_timestamp();
  write_file_atomic(dir / "manifest.json", manifest.json());
}

int run_command(const std::string& command, const Options& o) {
  cli::RunManifest manifest;
  manifest.command = command;
  manifest.started = cli::utc_timestamp();
  manifest.threads = o.threads;
  const cli::Settings settings = load_settings(o);
  manifest.config = settings.values();

  if (command == "plot") {
    const CsvTable table = CsvTable::parse(read_file(o.csv));
    const double floor = settings.get_double("plot.floor");
    if (!(floor > 0.0)) throw ValidationError("plot.floor must be positive");
    const std::string svg = cli::plot_csv(table, o.kind, floor);
    manifest.master_seed = settings.get_seed("run.seed");
    write_outputs(o, manifest, {{fs::path(o.csv).stem().string() + ".svg", svg}});
    return 0;
  }

  cli::RunConfig config = cli::RunConfig::from(settings);
  manifest.master_seed = config.master_seed;
  cli::Runner runner(std::move(config), o.threads);
  const cli::CommandResult result = runner.run(command);
  manifest.failed_points = result.failed_points;
  write_outputs(o, manifest, result.artifacts);
  if (result.failed_points > 0) {
    std::cerr << "qmbdp: " << result.failed_points << " sweep point(s) failed; see the status column\n";
    return kExitRuntime;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stroboscopic detection probability of an interacting fermion chain"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config_file, "INI-like configuration file")->check(CLI::ExistingFile);
    sub->add_option("--set", o.overrides, "override, key=value (repeatable)");
    sub->add_option("--out-dir", o.out_dir, "output directory");
    sub->add_option("--threads", o.threads, "worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--seed", o.seed, "master seed (run.seed)");
  };

  const std::vector<std::pair<std::string, std::string>> commands = {
      {"gaps", "gap parameter g_alpha of the N_R = 0, 1 states versus Delta"},
      {"lambda1", "leading decay rate lambda_1 of the no-click step via Arnoldi"},
      {"rn", "no-detection probability R_n versus Delta"},
      {"dynamics", "observables under free evolution"},
      {"trajectory", "single-run click counts C"},
      {"singleshot", "<n_p n_q> at one time under free evolution"},
      {"transition", "smallest Delta with R_n above a threshold"},
      {"operator", "dump H, H0, H1 or the spin operator as triplets"},
  };
  for (const auto& [name, help] : commands) common(app.add_subcommand(name, help));

  CLI::App* plot = app.add_subcommand("plot", "SVG line plot of a CSV written by another subcommand");
  common(plot);
  plot->add_option("csv", o.csv, "input CSV")->required()->check(CLI::ExistingFile);
  std::vector<std::string> kinds;
  for (const auto& k : cli::plot_kinds()) kinds.push_back(k.name);
  plot->add_option("--kind", o.kind, "plot kind")->required()->check(CLI::IsMember(kinds));

  CLI::App* keys = app.add_subcommand("keys", "list configuration keys and defaults");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }

  if (keys->parsed()) {
    for (const auto& k : cli::key_table())
      std::cout << k.key << " = " << (k.value.empty() ? "\"\"" : k.value) << "    # " << k.help << "\n";
    return 0;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    return run_command(command, o);
  } catch (const ValidationError& e) {
    std::cerr << "qmbdp: invalid input: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "qmbdp: " << e.what() << "\n";
    return kExitRuntime;
  }
}
