// Runs the netinv binary end to end.

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

const std::string kData = NETINV_DATA_DIR;

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("netinv_cli_test_" + std::to_string(::getpid())) / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

int run(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(NETINV_CLI) + " " + args + " >" + (log / "stdout.txt").string() + " 2>" +
                          (log / "stderr.txt").string();
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

long lines(const fs::path& p) {
  std::ifstream in(p);
  long n = 0;
  for (std::string s; std::getline(in, s);) ++n;
  return n;
}

// Grid config with the network given by absolute path.
fs::path write_config(const fs::path& dir, const std::string& body) {
  const fs::path p = dir / "config.json";
  std::ofstream(p) << "{\"network\": \"" << kData << "/networks/ieee9.json\", " << body << "}";
  return p;
}

}  // namespace

TEST(Cli, Usage) {
  const fs::path d = scratch("usage");
  EXPECT_EQ(run("", d), 1);
  EXPECT_EQ(run("simulate", d), 1);
  EXPECT_EQ(run("bogus --config x", d), 1);
}

TEST(Cli, ConfigErrors) {
  const fs::path d = scratch("config");
  EXPECT_EQ(run("rci --config " + (d / "missing.json").string(), d), 2);
  std::ofstream(d / "bad.json") << R"({"network": {"buses": [{"id": 1, "kind": "generator"}], "lines": [[1, 5, 0.1]]}})";
  EXPECT_EQ(run("rci --config " + (d / "bad.json").string() + " --out " + d.string(), d), 2);
}

TEST(Cli, RciWritesOneFilePerNode) {
  const fs::path d = scratch("rci");
  ASSERT_EQ(run("rci --config " + kData + "/ieee9.json --out " + d.string(), d), 0);
  for (int id = 1; id <= 9; ++id) EXPECT_TRUE(fs::exists(d / ("rci_" + std::to_string(id) + ".txt"))) << id;
  EXPECT_EQ(lines(d / "rci_summary.csv"), 10);
}

TEST(Cli, ContractExamples) {
  const fs::path d = scratch("contract");
  ASSERT_EQ(run("contract --config " + kData + "/two_node.json --out " + (d / "two").string(), d), 0);
  std::istringstream c(slurp(d / "two" / "contract.txt"));
  std::string tag;
  double y0 = 0, y1 = 0;
  c >> tag >> y0 >> y1;
  EXPECT_EQ(tag, "y_max");
  // Exact fixed point (1, 1); the sampled epigraph sits within one grid step above.
  EXPECT_GE(y0, 1.0 - 1e-9);
  EXPECT_LE(y0, 1.25);
  EXPECT_DOUBLE_EQ(y0, y1);
  EXPECT_TRUE(fs::exists(d / "two" / "epigraph_0.csv"));

  ASSERT_EQ(run("contract --config " + kData + "/decoupled.json --out " + (d / "dec").string(), d), 0);
  EXPECT_NE(slurp(d / "stdout.txt").find("after 1 iterations"), std::string::npos);

  EXPECT_EQ(run("contract --config " + kData + "/supercritical.json --out " + (d / "sup").string(), d), 4);
  EXPECT_NE(slurp(d / "stderr.txt").find("NoValidContract"), std::string::npos);
}

TEST(Cli, SimulateIsDeterministic) {
  const fs::path d = scratch("sim");
  const fs::path cfg = write_config(d, R"("simulation": {"t_end": 3.0}, "disturbance": {"random_phase": true})");
  ASSERT_EQ(run("simulate --config " + cfg.string() + " --seed 5 --out " + (d / "a").string(), d), 0);
  ASSERT_EQ(run("simulate --config " + cfg.string() + " --seed 5 --jobs 2 --out " + (d / "b").string(), d), 0);
  ASSERT_EQ(run("simulate --config " + cfg.string() + " --seed 6 --out " + (d / "c").string(), d), 0);
  EXPECT_EQ(lines(d / "a" / "trace.csv"), 3.0 / 0.05 + 1 + 1);  // header
  EXPECT_EQ(slurp(d / "a" / "trace.csv"), slurp(d / "b" / "trace.csv"));
  EXPECT_NE(slurp(d / "a" / "trace.csv"), slurp(d / "c" / "trace.csv"));
  EXPECT_NE(slurp(d / "a" / "verdicts.txt").find("omega_bound true"), std::string::npos);
}

TEST(Cli, EquilibriumVerdictsHold) {
  const fs::path d = scratch("eq");
  const fs::path cfg = write_config(d, R"("simulation": {"t_end": 2.0}, "disturbance": {"amplitude": 0})");
  ASSERT_EQ(run("simulate --config " + cfg.string() + " --out " + d.string(), d), 0);
  const std::string v = slurp(d / "verdicts.txt");
  EXPECT_NE(v.find("omega_bound true"), std::string::npos);
  EXPECT_NE(v.find("theta_bound true"), std::string::npos);
}

TEST(Cli, MpcWithoutContingencyMatchesSimulate) {
  const fs::path d = scratch("mpc_none");
  const fs::path cfg = write_config(d, R"("simulation": {"t_end": 2.0})");
  ASSERT_EQ(run("simulate --config " + cfg.string() + " --out " + (d / "s").string(), d), 0);
  ASSERT_EQ(run("mpc --config " + cfg.string() + " --out " + (d / "m").string(), d), 0);
  EXPECT_EQ(slurp(d / "s" / "trace.csv"), slurp(d / "m" / "trace.csv"));
}

TEST(Cli, MpcBusLoss) {
  const fs::path d = scratch("mpc");
  ASSERT_EQ(run("mpc --config " + kData + "/ieee9_contingency.json --out " + d.string(), d), 0);
  EXPECT_EQ(lines(d / "trace.csv"), 10.0 / 0.05 + 1 + 1);
  EXPECT_EQ(lines(d / "tube.csv"), 10.0 / 0.05 + 1 + 1);
  EXPECT_EQ(lines(d / "reference.csv"), 50 + 1 + 1);
  const std::string v = slurp(d / "verdicts.txt");
  EXPECT_NE(v.find("error_in_tube true"), std::string::npos);
  EXPECT_NE(v.find("settled true"), std::string::npos);
}

TEST(Cli, MpcIslandingIsLogged) {
  const fs::path d = scratch("island");
  const fs::path cfg = write_config(
      d, R"("load_scale": 0.15, "simulation": {"t_end": 10.0}, "disturbance": {"amplitude": 0},
            "contingencies": [{"time": 1.0, "kind": "line_trip", "bus": 1, "to": 4}],
            "mpc": {"plan_share": 0.6})");
  const int code = run("mpc --config " + cfg.string() + " --out " + d.string(), d);
  const std::string err = slurp(d / "stderr.txt");
  EXPECT_NE(err.find("2 islands"), std::string::npos);
  EXPECT_NE(err.find("unreachable from source 4: 1"), std::string::npos);
  // Generator 1 never hears from bus 4, so its frequency cap cannot be held.
  EXPECT_EQ(code, 4);
  EXPECT_NE(err.find("PlanInfeasible"), std::string::npos);
}
