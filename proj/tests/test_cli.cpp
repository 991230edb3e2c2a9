#include <qmbdp/cli/commands.hpp>
#include <qmbdp/cli/config.hpp>
#include <qmbdp/cli/manifest.hpp>
#include <qmbdp/cli/svg.hpp>
#include <qmbdp/io.hpp>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <string>

namespace fs = std::filesystem;
using namespace qmbdp;

namespace {

std::size_t count(const std::string& haystack, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = haystack.find(needle); pos != std::string::npos; pos = haystack.find(needle, pos + 1)) ++n;
  return n;
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("qmbdp_test_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(QMBDP_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Settings, DefaultsCoverEveryKey) {
  const cli::Settings s;
  for (const auto& k : cli::key_table()) EXPECT_EQ(s.get(k.key), k.value);
  EXPECT_EQ(s.get_int("chain.sites"), 14);
  EXPECT_EQ(s.get_list("sweep.deltas"), (std::vector<double>{0.5, 0.9, 1.1, 2.0}));
}

TEST(Settings, IniSectionsAndComments) {
  cli::Settings s;
  s.load_ini("# comment\n[chain]\nsites = 10  ; trailing\n\n[sweep]\ndeltas = 0.5, 2\n", "run.ini");
  EXPECT_EQ(s.get_int("chain.sites"), 10);
  EXPECT_EQ(s.get_list("sweep.deltas"), (std::vector<double>{0.5, 2.0}));
}

TEST(Settings, UnknownKeysRejected) {
  cli::Settings s;
  EXPECT_THROW(s.load_ini("[chain]\nsitez = 10\n", "run.ini"), ValidationError);
  EXPECT_THROW(s.apply_override("detector.r=3"), ValidationError);
  EXPECT_THROW(s.apply_override("no_equals_sign"), ValidationError);
  EXPECT_THROW(s.load_ini("[chain\n", "run.ini"), ValidationError);
  try {
    s.load_ini("\n[chain]\nbogus = 1\n", "run.ini");
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("run.ini:3"), std::string::npos) << e.what();
  }
}

TEST(Settings, OverridesWin) {
  cli::Settings s;
  s.load_ini("[detector]\nsteps = 10\n", "a.ini");
  s.apply_override("detector.steps = 20");
  EXPECT_EQ(s.get_int("detector.steps"), 20);
}

TEST(RunConfig, EmptyDeltaListIsInvalid) {
  cli::Settings s;
  s.apply_override("sweep.deltas=");
  EXPECT_THROW(cli::RunConfig::from(s), ValidationError);
}

TEST(RunConfig, RejectsBadValues) {
  auto expect_invalid = [](const std::string& kv) {
    cli::Settings s;
    s.apply_override(kv);
    EXPECT_THROW(cli::RunConfig::from(s), ValidationError) << kv;
  };
  expect_invalid("chain.J=2");
  expect_invalid("chain.sites=7");
  expect_invalid("detector.p=0");
  expect_invalid("detector.q=9");
  expect_invalid("filter.sigma=0");
  expect_invalid("sweep.taus=-1");
  expect_invalid("solver.krylov_dim=4");
  expect_invalid("solver.propagator_tol=1e-17");
  expect_invalid("trajectory.count=0");
  expect_invalid("filter.energy=lowest");
  cli::Settings s;
  s.apply_override("dynamics.observables=N_R, n_99");
  const cli::RunConfig c = cli::RunConfig::from(s);
  EXPECT_THROW(c.check_observables(), ValidationError);
}

TEST(RunConfig, InfeasibleSizeNamesModule) {
  cli::Settings s;
  s.apply_override("chain.sites=26");
  s.apply_override("run.max_memory_gb=1");
  try {
    cli::RunConfig::from(s);
    FAIL() << "expected CapacityError";
  } catch (const CapacityError& e) {
    EXPECT_EQ(e.module(), "detection");
  }
}

TEST(RunConfig, ObservablesParse) {
  EXPECT_EQ(cli::parse_observable("N_R").kind, Observable::Kind::RightHalfCount);
  EXPECT_EQ(cli::parse_observable("n_3").site, 3);
  const Observable pair = cli::parse_observable("n_3*n_-2");
  EXPECT_EQ(pair.kind, Observable::Kind::PairOccupation);
  EXPECT_EQ(pair.other_site, -2);
  EXPECT_THROW(cli::parse_observable("m_3"), ValidationError);
}

TEST(Numbers, ShortestRoundTrip) {
  for (double x : {0.1, 1.0 / 3.0, 1e-300, 6.02214076e23, -2.5}) EXPECT_EQ(parse_number(format_number(x)), x);
  EXPECT_EQ(format_number(2.0), "2");
  EXPECT_THROW(parse_number("1.5x"), ValidationError);
}

TEST(Csv, RoundTripAndUnits) {
  CsvTable t({"delta[J]", "R_n", "status"});
  t.add({"0.5", "1e-9", "ok"});
  t.add({"1", "0.25", "failed: a, b"});
  const CsvTable back = CsvTable::parse(t.str());
  EXPECT_EQ(back.header(), t.header());
  EXPECT_EQ(back.rows(), t.rows());
  EXPECT_EQ(back.column("delta"), 0u);
  EXPECT_EQ(back.rows()[1][2], "failed: a; b");
  EXPECT_THROW(static_cast<void>(back.column("tau")), ValidationError);
}

TEST(Plot, TwoPointsOnePolyline) {
  CsvTable t({"n_sites", "delta[J]", "tau[1/J]", "R_n", "status"});
  t.add({"12", "0.5", "2", "1e-20", "ok"});
  t.add({"12", "2", "2", "0.9", "ok"});
  const std::string svg = cli::plot_csv(t, "rn");
  EXPECT_EQ(count(svg, "<polyline"), 1u);
  const auto start = svg.find("points=\"") + 8;
  const std::string points = svg.substr(start, svg.find('"', start) - start);
  EXPECT_EQ(count(points, ","), 2u);
  EXPECT_EQ(count(points, " "), 1u);
  EXPECT_EQ(count(svg, "clamped"), 0u);
}

TEST(Plot, ZeroOnLogScaleIsClampedAndFlagged) {
  CsvTable t({"n_sites", "delta[J]", "tau[1/J]", "R_n", "status"});
  t.add({"12", "0.5", "2", "0", "ok"});
  t.add({"12", "2", "2", "0.9", "ok"});
  const auto series = cli::plot_series(t, cli::plot_kind("rn"), 1e-30);
  ASSERT_EQ(series.size(), 1u);
  EXPECT_TRUE(series[0].clamped);
  EXPECT_EQ(series[0].y[0], 1e-30);
  EXPECT_NE(cli::plot_csv(t, "rn", 1e-30).find("(clamped at floor)"), std::string::npos);
}

TEST(Plot, SkipsFailedRowsAndChecksSchema) {
  CsvTable t({"n_sites", "delta[J]", "tau[1/J]", "R_n", "status"});
  t.add({"12", "0.5", "2", "", "failed: boom"});
  t.add({"12", "1", "2", "0.5", "ok"});
  const auto series = cli::plot_series(t, cli::plot_kind("rn"), 1e-300);
  ASSERT_EQ(series.size(), 1u);
  EXPECT_EQ(series[0].x.size(), 1u);
  EXPECT_THROW(cli::plot_csv(t, "dynamics"), ValidationError);
  EXPECT_THROW(cli::plot_csv(t, "nonsense"), ValidationError);
}

TEST(Plot, GroupsBecomeSeparateLines) {
  CsvTable t({"n_sites", "delta[J]", "tau[1/J]", "R_n", "status"});
  for (const char* tau : {"2", "4"})
    for (const char* d : {"0.5", "1", "2"}) t.add({"10", d, tau, "0.1", "ok"});
  EXPECT_EQ(count(cli::plot_csv(t, "rn"), "<polyline"), 2u);
}

TEST(Manifest, DigestsAndJson) {
  EXPECT_EQ(cli::sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  cli::RunManifest m;
  m.command = "rn";
  m.config = {{"chain.sites", "12"}};
  m.add({"rn.csv", "x\n"});
  const auto j = nlohmann::json::parse(m.json());
  EXPECT_EQ(j["command"], "rn");
  EXPECT_EQ(j["outputs"][0]["file"], "rn.csv");
  EXPECT_EQ(j["outputs"][0]["sha256"], cli::sha256_hex("x\n"));
}

TEST(Runner, ThreadCountDoesNotChangeOutput) {
  cli::Settings s;
  s.apply_override("chain.sites=8");
  s.apply_override("detector.p=2");
  s.apply_override("detector.q=4");
  s.apply_override("detector.steps=50");
  s.apply_override("sweep.deltas=0.5,1,2");
  s.apply_override("trajectory.count=3");
  for (const std::string cmd : {"rn", "gaps", "trajectory", "lambda1"}) {
    const auto one = cli::Runner(cli::RunConfig::from(s), 1).run(cmd);
    const auto three = cli::Runner(cli::RunConfig::from(s), 3).run(cmd);
    ASSERT_EQ(one.artifacts.size(), three.artifacts.size()) << cmd;
    for (std::size_t i = 0; i < one.artifacts.size(); ++i) {
      EXPECT_EQ(one.artifacts[i].file, three.artifacts[i].file);
      EXPECT_EQ(one.artifacts[i].content, three.artifacts[i].content) << cmd;
    }
  }
}

TEST(Runner, FailedPointKeepsPartialResults) {
  cli::Settings s;
  s.apply_override("chain.sites=8");
  s.apply_override("detector.p=2");
  s.apply_override("detector.q=4");
  s.apply_override("detector.steps=10");
  s.apply_override("sweep.deltas=0.5,nan");
  EXPECT_THROW(cli::RunConfig::from(s), ValidationError);
  s.apply_override("sweep.deltas=0.5,1");
  s.apply_override("filter.energy=1000");
  s.apply_override("filter.sigma=0.001");
  const auto r = cli::Runner(cli::RunConfig::from(s), 1).run("rn");
  EXPECT_EQ(r.failed_points, 2u);
  const CsvTable t = CsvTable::parse(r.artifacts.front().content);
  ASSERT_EQ(t.size(), 2u);
  EXPECT_EQ(t.rows()[0][t.column("status")].rfind("failed: ", 0), 0u);
}

TEST(Executable, RnExampleSpansSixOrders) {
  const fs::path dir = scratch("rn");
  ASSERT_EQ(run_cli("rn --set chain.sites=12 --set sweep.deltas=0.5,0.9,1.1,2.0 --threads 2 --out-dir " + dir.string()),
            0);
  const CsvTable t = CsvTable::parse(read_file(dir / "rn.csv"));
  ASSERT_EQ(t.size(), 4u);
  double lo = 0.0;
  double hi = -1e300;
  double previous = -1e300;
  for (const auto& row : t.rows()) {
    EXPECT_EQ(row[t.column("status")], "ok");
    const double v = parse_number(row[t.column("log10_R_n")]);
    EXPECT_GT(v, previous);
    previous = v;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  EXPECT_GE(hi - lo, 6.0);
  EXPECT_TRUE(fs::exists(dir / "rn.svg"));
  EXPECT_TRUE(fs::exists(dir / "manifest.json"));
}

TEST(Executable, RerunsAreByteIdentical) {
  const fs::path a = scratch("rerun_a");
  const fs::path b = scratch("rerun_b");
  const std::string args =
      "trajectory --set chain.sites=8 --set detector.p=2 --set detector.q=4 --set detector.steps=200 "
      "--set trajectory.count=6 --set trajectory.click_times=true --seed 11 --out-dir ";
  ASSERT_EQ(run_cli(args + a.string() + " --threads 1"), 0);
  ASSERT_EQ(run_cli(args + b.string() + " --threads 3"), 0);
  const auto ma = nlohmann::json::parse(read_file(a / "manifest.json"));
  const auto mb = nlohmann::json::parse(read_file(b / "manifest.json"));
  ASSERT_EQ(ma["outputs"].size(), mb["outputs"].size());
  ASSERT_GE(ma["outputs"].size(), 3u);
  for (std::size_t i = 0; i < ma["outputs"].size(); ++i) {
    const std::string file = ma["outputs"][i]["file"];
    EXPECT_EQ(ma["outputs"][i]["sha256"], mb["outputs"][i]["sha256"]) << file;
    EXPECT_EQ(read_file(a / file), read_file(b / file)) << file;
    EXPECT_EQ(cli::sha256_hex(read_file(a / file)), ma["outputs"][i]["sha256"]) << file;
  }
  EXPECT_EQ(ma["master_seed"], 11);
  EXPECT_EQ(ma["config"]["chain.sites"], "8");
}

TEST(Executable, ExitCodes) {
  const fs::path dir = scratch("codes");
  EXPECT_EQ(run_cli("rn --set sweep.deltas= --out-dir " + dir.string()), 1);
  EXPECT_EQ(run_cli("rn --set chain.nonsense=1 --out-dir " + dir.string()), 1);
  EXPECT_EQ(run_cli("rn --set chain.sites=26 --set run.max_memory_gb=1 --out-dir " + dir.string()), 1);
  EXPECT_EQ(run_cli("frobnicate"), 1);
  EXPECT_EQ(run_cli("rn --set chain.sites=8 --set detector.p=2 --set detector.q=4 --set detector.steps=5 "
                    "--set filter.energy=1000 --set filter.sigma=0.001 --out-dir " +
                    dir.string()),
            2);
  EXPECT_TRUE(fs::exists(dir / "rn.csv"));
  EXPECT_EQ(run_cli("keys"), 0);
}

TEST(Executable, PlotSubcommand) {
  const fs::path dir = scratch("plot");
  write_file_atomic(dir / "two.csv", "n_sites,delta[J],tau[1/J],R_n,status\n12,0.5,2,1e-9,ok\n12,2,2,0.9,ok\n");
  ASSERT_EQ(run_cli("plot " + (dir / "two.csv").string() + " --kind rn --out-dir " + dir.string()), 0);
  const std::string svg = read_file(dir / "two.svg");
  EXPECT_EQ(count(svg, "<polyline"), 1u);
  EXPECT_EQ(run_cli("plot " + (dir / "two.csv").string() + " --kind dynamics --out-dir " + dir.string()), 1);
}
