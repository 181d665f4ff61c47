#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "bumpy/run.hpp"

using namespace bumpy;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("bumpy_test_cli_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool mentions(const std::vector<std::string>& errors, const std::string& needle) {
  for (const auto& e : errors)
    if (e.find(needle) != std::string::npos) return true;
  return false;
}

int run_quiet(const RunConfig& c, bool plot = false) {
  std::ostringstream log;
  RunOptions opt;
  opt.log = &log;
  opt.plot_data = plot;
  return run(c, opt);
}

}  // namespace

TEST(ParseConfig, MinimalCellConfig) {
  const auto r = parse_config_string("[run]\ncommand = cell\n[coefficients]\nfamily = laminate\nparams = 2 1\n"
                                     "[cell]\nresolution = 128\n");
  ASSERT_TRUE(r.config) << (r.errors.empty() ? "" : r.errors.front());
  EXPECT_EQ(r.config->command, Command::cell);
  EXPECT_EQ(r.config->cell_resolution, 128);
  EXPECT_EQ(r.config->coefficient_params, (std::vector<double>{2, 1}));
}

TEST(ParseConfig, RadiusBelowEpsilonNamesTheFloor) {
  const auto r = parse_config_string("[run]\ncommand = lipschitz\n[scan]\nepsilons = 0.5\nradii = 0.25 0.5\n");
  ASSERT_FALSE(r.config);
  EXPECT_TRUE(mentions(r.errors, "r = 0.25 < eps = 0.5: the estimate holds only for r >= eps"));
  // A non-reciprocal eps is refused as well.
  const auto q = parse_config_string("[run]\ncommand = lipschitz\n[scan]\nepsilons = 0.3\nradii = 0.25\n");
  ASSERT_FALSE(q.config);
  EXPECT_TRUE(mentions(q.errors, "r >= eps"));
}

TEST(ParseConfig, AllErrorsReported) {
  const auto r = parse_config_string("[run]\ncommand = cell\ncolour = red\n[cell]\nresolution = many\n"
                                     "[dtn]\nheight = 1\n[nonsense]\na = 1\n");
  ASSERT_FALSE(r.config);
  EXPECT_TRUE(mentions(r.errors, "[run] unknown key 'colour'"));
  EXPECT_TRUE(mentions(r.errors, "[cell] resolution: expected an integer, got 'many'"));
  EXPECT_TRUE(mentions(r.errors, "[dtn] height: 1 outside"));
  EXPECT_TRUE(mentions(r.errors, "unknown section [nonsense]"));
  EXPECT_EQ(r.errors.size(), 4u);
}

TEST(ParseConfig, FamilyAndCommandErrors) {
  auto r = parse_config_string("[run]\ncommand = cell\n[coefficients]\nfamily = marble\n");
  ASSERT_FALSE(r.config);
  EXPECT_TRUE(mentions(r.errors, "marble"));
  r = parse_config_string("[run]\ncommand = cell\n", Command::dtn);
  EXPECT_TRUE(mentions(r.errors, "conflicts with the 'dtn' subcommand"));
  r = parse_config_string("[coefficients]\nfamily = constant\nparams = 1\n", Command::dtn);
  ASSERT_TRUE(r.config);
  EXPECT_EQ(r.config->command, Command::dtn);
  r = parse_config_string("[run]\ncommand = excess\n[excess]\ntheta = 0.25\n");
  EXPECT_TRUE(mentions(r.errors, "[excess] theta"));
  r = parse_config_string("[run]\ncommand = homog\n[scan]\nepsilons = 0.25 0.125\n");
  EXPECT_TRUE(mentions(r.errors, "at least 3 values of eps"));
  r = parse_config_string("[run]\ncommand = lipschitz\n[scan]\ncells_per_epsilon = 2\n");
  EXPECT_TRUE(mentions(r.errors, ">= 4 cells per eps"));
}

TEST(Run, CellLaminateEmitsSqrtThree) {
  const auto dir = scratch("cell");
  auto r = parse_config_string("[run]\ncommand = cell\noutput = " + dir.string() +
                               "\n[coefficients]\nfamily = laminate\nparams = 2 1\n[cell]\nresolution = 128\n");
  ASSERT_TRUE(r.config);
  ASSERT_EQ(run_quiet(*r.config), exit_ok);
  std::ifstream in(dir / "cell.csv");
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "entry,value");
  std::getline(in, line);
  ASSERT_EQ(line.rfind("Abar11,", 0), 0u);
  EXPECT_NEAR(std::stod(line.substr(7)), std::sqrt(3.0), 1e-3);
  const auto manifest = slurp(dir / "manifest.txt");
  EXPECT_NE(manifest.find("solver_tolerance: 1e-10"), std::string::npos);
  EXPECT_NE(manifest.find("cells_per_eps_rule"), std::string::npos);
  EXPECT_NE(manifest.find("config_hash: fnv1a64:"), std::string::npos);
  EXPECT_FALSE(fs::exists(dir / "bumpy.lock"));
}

TEST(Run, FlatLipschitzSmokeIsIdenticallyOne) {
  const auto dir = scratch("lipschitz");
  auto r = parse_config_string("[run]\ncommand = lipschitz\noutput = " + dir.string() +
                               "\n[coefficients]\nfamily = constant\nparams = 1\n[graph]\nfamily = flat\nparams = -0.5\n"
                               "[scan]\nepsilons = 0.25 0.125\ncells_per_epsilon = 4\n");
  ASSERT_TRUE(r.config);
  ASSERT_EQ(run_quiet(*r.config, true), exit_ok);
  std::ifstream in(dir / "lipschitz.csv");
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "epsilon,r,M");
  int rows = 0;
  while (std::getline(in, line)) {
    EXPECT_EQ(line.substr(line.rfind(',') + 1), "1") << line;
    ++rows;
  }
  EXPECT_EQ(rows, 16);
  EXPECT_TRUE(fs::exists(dir / "lipschitz.dat"));
  EXPECT_NE(slurp(dir / "manifest.txt").find("4 used, satisfied"), std::string::npos);
}

TEST(Run, RerunIsByteIdentical) {
  const auto dir = scratch("rerun");
  auto r = parse_config_string("[run]\ncommand = blayer\noutput = " + dir.string() +
                               "\n[blayer]\ntruncations = 8 10 12\ncells_per_unit = 8\nvertical_cells = 8\n"
                               "cell_resolution = 16\n");
  ASSERT_TRUE(r.config);
  ASSERT_EQ(run_quiet(*r.config), exit_ok);
  const auto a = slurp(dir / "blayer_uloc.csv"), b = slurp(dir / "blayer_profile.csv");
  ASSERT_EQ(run_quiet(*r.config), exit_ok);
  EXPECT_EQ(a, slurp(dir / "blayer_uloc.csv"));
  EXPECT_EQ(b, slurp(dir / "blayer_profile.csv"));
}

TEST(Run, LockedDirectoryIsRefused) {
  const auto dir = scratch("lock");
  fs::create_directories(dir);
  std::ofstream(dir / "bumpy.lock") << "1\n";
  auto r = parse_config_string("[run]\ncommand = cell\noutput = " + dir.string() +
                               "\n[coefficients]\nfamily = constant\nparams = 1\n[cell]\nresolution = 8\n");
  ASSERT_TRUE(r.config);
  EXPECT_EQ(run_quiet(*r.config), exit_validation);
  EXPECT_FALSE(fs::exists(dir / "cell.csv"));
}

TEST(Run, DryRunPrintsCanonicalConfig) {
  auto r = parse_config_string("[run]\ncommand = dtn\n[coefficients]\nfamily = constant\nparams = 1\n");
  ASSERT_TRUE(r.config);
  std::ostringstream log;
  RunOptions opt;
  opt.dry_run = true;
  opt.log = &log;
  EXPECT_EQ(run(*r.config, opt), exit_ok);
  EXPECT_NE(log.str().find("run.command = dtn"), std::string::npos);
  EXPECT_EQ(fnv1a(r.config->canonical()), fnv1a(r.config->canonical()));
  EXPECT_EQ(fnv1a(""), 1469598103934665603ull);
}

#ifdef BUMPY_EXE
TEST(Executable, InvalidConfigExitsThreeWithoutArtifacts) {
  const auto dir = scratch("invalid");
  fs::create_directories(dir);
  const auto cfg = dir / "bad.ini";
  const auto out = dir / "out";
  std::ofstream(cfg) << "[run]\ncommand = cell\noutput = " << out.string() << "\n[cell]\nresolution = -4\n";
  const int status = std::system((std::string(BUMPY_EXE) + " run " + cfg.string() + " 2>/dev/null").c_str());
  ASSERT_TRUE(WIFEXITED(status));
  EXPECT_EQ(WEXITSTATUS(status), exit_validation);
  EXPECT_FALSE(fs::exists(out));
}

TEST(Executable, SubcommandRunsAndThreadsOverride) {
  const auto dir = scratch("exe");
  fs::create_directories(dir);
  const auto cfg = dir / "cell.ini";
  std::ofstream(cfg) << "[coefficients]\nfamily = constant\nparams = 2\n[cell]\nresolution = 8\n";
  const auto cmd = std::string(BUMPY_EXE) + " --threads 2 -o " + (dir / "out").string() + " cell " + cfg.string() +
                   " 2>/dev/null";
  const int status = std::system(cmd.c_str());
  ASSERT_TRUE(WIFEXITED(status));
  EXPECT_EQ(WEXITSTATUS(status), exit_ok);
  EXPECT_NE(slurp(dir / "out" / "manifest.txt").find("threads: 2"), std::string::npos);
  EXPECT_NE(slurp(dir / "out" / "cell.csv").find("Abar11,2\n"), std::string::npos);
}
#endif
