#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "belab/runner.hpp"

namespace fs = std::filesystem;
using namespace belab;

namespace {

const fs::path kFixtures = fs::path(BELAB_SOURCE_DIR) / "tests" / "fixtures";

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("belab_cli_" + std::to_string(::getpid())) / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

struct Result {
  int code = -1;
  std::string out, err;
};

Result belab_cli(const std::string& args, const fs::path& dir, const std::string& env = "") {
  const std::string cmd = env + " '" + std::string(BELAB_CLI_PATH) + "' " + args + " > '" + (dir / "stdout").string() +
                          "' 2> '" + (dir / "stderr").string() + "'";
  const int raw = std::system(cmd.c_str());
  Result r;
  r.code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  r.out = slurp(dir / "stdout");
  r.err = slurp(dir / "stderr");
  return r;
}

Result run_fixture(const std::string& name, const fs::path& out) {
  return belab_cli("run '" + (kFixtures / (name + ".toml")).string() + "' --out '" + out.string() + "'", out.parent_path());
}

json read_json(const fs::path& p) { return json::parse(slurp(p)); }

}  // namespace

TEST(ExitStatus, AllChecksPass) {
  const auto dir = scratch("exit0");
  const auto r = run_fixture("exit0_comparison", dir / "out");
  EXPECT_EQ(r.code, 0) << r.err;
  const auto manifest = read_json(dir / "out" / "run_manifest.json");
  EXPECT_EQ(manifest["exit_code"].get<int>(), 0);
  EXPECT_EQ(manifest["checks"].size(), 3u);
  for (const auto& c : manifest["checks"]) {
    EXPECT_TRUE(c["passed"].get<bool>());
    const auto rep = read_json(dir / "out" / c["report"].get<std::string>());
    for (const char* key : {"check_name", "inputs", "lhs", "rhs", "margin", "tolerance", "passed", "resolution", "notes"})
      EXPECT_TRUE(rep.contains(key)) << key;
    EXPECT_EQ(rep["passed"].get<bool>(), rep["margin"].get<double>() >= -rep["tolerance"].get<double>());
  }
}

TEST(ExitStatus, FailedCheck) {
  const auto dir = scratch("exit1");
  const auto r = run_fixture("exit1_failed_check", dir / "out");
  EXPECT_EQ(r.code, 1);
  const auto rep = read_json(dir / "out" / "generator-bound.json");
  EXPECT_FALSE(rep["passed"].get<bool>());
  EXPECT_NEAR(rep["lhs"].get<double>(), 36.0, 1e-12);
}

TEST(ExitStatus, MalformedManifoldNamesKeyAndLine) {
  const auto dir = scratch("exit2");
  const auto r = run_fixture("exit2_bad_manifold", dir / "out");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("metric"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("line 5"), std::string::npos) << r.err;
}

TEST(ExitStatus, ConfigErrors) {
  const auto dir = scratch("exit2b");
  auto write = [&](const std::string& name, const std::string& text) {
    std::ofstream(dir / name) << text;
    return belab_cli("run '" + (dir / name).string() + "' --out '" + (dir / "out").string() + "'", dir);
  };
  auto r = write("syntax.toml", "scenario = \"comparison\nmanifold = 3\n");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("syntax.toml:1"), std::string::npos) << r.err;
  r = write("suite.toml", "scenario = \"nonsense\"\n");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("nonsense"), std::string::npos);
  r = write("key.toml", "scenario = \"growth\"\n[growth]\nrank = 2\nsmax = 4\n");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("growth.smax"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("line 4"), std::string::npos) << r.err;
  r = write("catalog.toml", "scenario = \"mean-curvature\"\nmanifold = \"klein-bottle\"\n");
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(belab_cli("run", dir).code, 2);
  EXPECT_EQ(belab_cli("run '" + (dir / "missing.toml").string() + "'", dir).code, 2);
  EXPECT_EQ(belab_cli("run '" + (kFixtures / "exit0_comparison.toml").string() + "' --out '" + (dir / "o").string() + "'",
                      dir, "BELAB_SEED=abc")
                .code,
            2);
}

TEST(ExitStatus, HypothesisViolation) {
  const auto dir = scratch("exit3");
  const auto r = run_fixture("exit3_hypothesis", dir / "out");
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("hypothesis violation"), std::string::npos);
  const auto manifest = read_json(dir / "out" / "run_manifest.json");
  EXPECT_EQ(manifest["exit_code"].get<int>(), 3);
  EXPECT_TRUE(manifest["checks"][0].contains("error"));
}

TEST(ExitStatus, SolverFailure) {
  const auto dir = scratch("exit4");
  const auto r = run_fixture("exit4_solver", dir / "out");
  EXPECT_EQ(r.code, 4);
  EXPECT_NE(r.err.find("solver failure"), std::string::npos);
}

TEST(Reproducibility, DoubleRunIsByteIdentical) {
  const auto dir = scratch("repro");
  const fs::path cfg = dir / "segment.toml";
  std::ofstream(cfg) << "scenario = \"segment\"\nmanifold = \"flat-torus\"\nseed = 5\n[params]\nm = 1.0\n"
                        "[segment]\ntrials = 300\nspacing = 0.1\nf = \"1 + 0.5*sin(x)\"\n"
                        "[segment-quantities]\nmanifold = \"cylinder\"\nmanifold_options = { half_length = 60.0 }\n"
                        "triangle = { L = 50.0, epsilon = 0.01 }\ntriples = 2\ncandidates = 2\n";
  auto run = [&](const std::string& out, const std::string& extra, const std::string& env = "") {
    return belab_cli("run '" + cfg.string() + "' --out '" + (dir / out).string() + "' " + extra, dir, env).code;
  };
  ASSERT_EQ(run("a", ""), 0);
  ASSERT_EQ(run("b", "--jobs 2"), 0);
  ASSERT_EQ(run("c", "", "BELAB_SEED=6"), 0);
  for (const char* f : {"segment.json", "segment-quantities.json"}) {
    const auto a = slurp(dir / "a" / f);
    ASSERT_FALSE(a.empty());
    EXPECT_EQ(a, slurp(dir / "b" / f)) << f;
  }
  EXPECT_NE(slurp(dir / "a" / "segment.json"), slurp(dir / "c" / "segment.json"));
  EXPECT_EQ(read_json(dir / "c" / "run_manifest.json")["seed"].get<int>(), 6);
  // the manifest differs only in its timestamp
  auto ma = read_json(dir / "a" / "run_manifest.json"), mb = read_json(dir / "b" / "run_manifest.json");
  for (auto* m : {&ma, &mb}) {
    m->erase("timestamp");
    m->erase("jobs");
    for (auto& c : (*m)["checks"]) c.erase("seconds");
  }
  EXPECT_EQ(ma, mb);
}

TEST(Tables, GreenBarrierRowAndHeader) {
  const auto dir = scratch("tables");
  const auto r = belab_cli("tables --d 3 --lambda 0 --r 1 --out '" + (dir / "t.csv").string() + "'", dir);
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream csv(slurp(dir / "t.csv"));
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "rho,ell,H,G");
  int rows = 0;
  bool saw_half = false;
  while (std::getline(csv, line)) {
    ++rows;
    double v[4];
    char comma;
    std::istringstream ls(line);
    ls >> v[0] >> comma >> v[1] >> comma >> v[2] >> comma >> v[3];
    EXPECT_NEAR(v[2] * v[0], 2.0, 1e-12);
    if (v[0] >= 0.05) EXPECT_NEAR(v[3], v[0] * v[0] / 6.0 + 1.0 / (3.0 * v[0]) - 0.5, 1e-8);
    if (v[0] == 0.5) {
      saw_half = true;
      EXPECT_NEAR(v[3], 0.2083333333333333, 1e-8);
    }
  }
  EXPECT_EQ(rows, 100);
  EXPECT_TRUE(saw_half);
  // deterministic formatting
  const auto again = belab_cli("tables --d 3 --lambda 0 --r 1", dir);
  EXPECT_EQ(again.out, slurp(dir / "t.csv"));
  EXPECT_EQ(belab_cli("tables --d 3 --lambda 1 --r 1", dir).code, 2);
  EXPECT_EQ(belab_cli("tables --d 0.5 --lambda 0 --r 1", dir).code, 2);
}

TEST(Horizon, TableAndJson) {
  const auto dir = scratch("horizon");
  const auto cfg = (fs::path(BELAB_SOURCE_DIR) / "configs" / "horizon_black_ring.toml").string();
  const auto t = belab_cli("horizon '" + cfg + "' --r-max 200", dir);
  ASSERT_EQ(t.code, 0) << t.err;
  EXPECT_NE(t.out.find("delta_effective"), std::string::npos);
  const auto j = belab_cli("horizon '" + cfg + "' --r-max 200 --json", dir);
  ASSERT_EQ(j.code, 0);
  const auto data = json::parse(j.out);
  EXPECT_NEAR(data["delta_effective"].get<double>(), 0.1, 1e-15);
  EXPECT_EQ(data["betti"]["ceiling"].get<int>(), 5);
  std::ofstream(dir / "bad.toml") << "n = 3\nD = 1.0\n";
  const auto bad = belab_cli("horizon '" + (dir / "bad.toml").string() + "'", dir);
  EXPECT_EQ(bad.code, 2);
  EXPECT_NE(bad.err.find("V"), std::string::npos);
}

TEST(Runner, SuitesCoverEveryCheck) {
  std::set<std::string> all;
  for (const auto& s : cli::suite_names()) {
    const auto names = cli::expand_scenario(s);
    EXPECT_FALSE(names.empty()) << s;
    if (s != "all") all.insert(names.begin(), names.end());
  }
  EXPECT_EQ(all.size(), cli::registry().size());
  EXPECT_EQ(cli::expand_scenario("all").size(), cli::registry().size());
  EXPECT_EQ(cli::expand_scenario("almost-split"), std::vector<std::string>{"almost-split"});
  EXPECT_THROW(cli::expand_scenario("section-9"), ConfigError);
}

TEST(Runner, SampleConfigsParse) {
  for (const auto& e : fs::directory_iterator(fs::path(BELAB_SOURCE_DIR) / "configs")) {
    if (e.path().extension() != ".toml" || e.path().filename().string().rfind("horizon", 0) == 0) continue;
    EXPECT_NO_THROW(cli::load_config(e.path(), nullptr)) << e.path();
  }
  EXPECT_EQ(cli::parse_seed("42", "x"), 42u);
  EXPECT_THROW(cli::parse_seed("-1", "x"), ConfigError);
}
