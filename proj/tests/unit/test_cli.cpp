#include <gtest/gtest.h>
#include <sys/wait.h>
#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "rmfg/cli/runner.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("rmfg_cli_" + std::to_string(::getpid()) + "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  // Runs the CLI with stdout and stderr captured; returns the exit code.
  int run(const std::string& args) {
    const std::string cmd = "'" + std::string(RMFG_CLI_PATH) + "' " + args + " > '" + (dir_ / "stdout").string() +
                            "' 2> '" + (dir_ / "stderr").string() + "'";
    const int st = std::system(cmd.c_str());
    return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  }
  std::string out_arg(const std::string& name) const { return "--out '" + (dir_ / name).string() + "'"; }
  std::string read(const fs::path& p) const {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
  }
  json read_json(const fs::path& p) const { return json::parse(read(p)); }
  fs::path write(const std::string& name, const std::string& text) const {
    std::ofstream(dir_ / name, std::ios::binary) << text;
    return dir_ / name;
  }

  fs::path dir_;
};

}  // namespace

TEST_F(CliTest, NonconstantBWithSuperquadraticQFailsWithWitness) {
  EXPECT_EQ(run("check-abc model=demo-power q=3 b=nonconstant samples=200 " + out_arg("o")), 2);
  const auto rep = read_json(dir_ / "o" / "reports.json");
  EXPECT_FALSE(rep["pass"].get<bool>());
  bool found = false;
  for (const auto& c : rep["checks"])
    if (c["name"] == "abc_conditions") found = c["witness"].dump().find("b not constant") != std::string::npos;
  EXPECT_TRUE(found) << rep.dump(2);
  EXPECT_NE(read(dir_ / "stdout").find("FAIL"), std::string::npos);
}

TEST_F(CliTest, PassingRunExitsZeroAndWritesManifest) {
  EXPECT_EQ(run("check-abc model=demo-power samples=200 " + out_arg("o")), 0);
  const auto man = read_json(dir_ / "o" / "manifest.json");
  EXPECT_EQ(man["exit_code"], 0);
  EXPECT_EQ(man["config"]["task"], "check-abc");
  EXPECT_EQ(man["seed"], rmfg::cli::kDefaultSeed);
  EXPECT_TRUE(man["versions"].contains("eigen"));
  EXPECT_TRUE(man["timestamp"].contains("utc"));
}

TEST_F(CliTest, UsageErrorsExit64) {
  EXPECT_EQ(run("no-such-task model=demo-power " + out_arg("o")), 64);
  EXPECT_EQ(run("check-abc model=no-such-model " + out_arg("o")), 64);
  EXPECT_EQ(run("check-abc model=demo-power not_a_key=1 " + out_arg("o")), 64);
  EXPECT_EQ(run("check-abc " + out_arg("o")), 64);
  EXPECT_EQ(run("--bogus-flag"), 64);
  EXPECT_EQ(run("--help"), 0);
}

TEST_F(CliTest, BadValuesAreExecutionErrors) {
  EXPECT_EQ(run("solve-finite model=demo-finite-A dt=-1 " + out_arg("o")), 1);
  EXPECT_EQ(read_json(dir_ / "o" / "manifest.json")["exit_code"], 1);
  EXPECT_TRUE(read_json(dir_ / "o" / "reports.json").contains("error"));
  EXPECT_EQ(run("solve-finite model=demo-finite-A dt=fast " + out_arg("p")), 1);
}

TEST_F(CliTest, MalformedConfigReportsLineAndColumn) {
  const auto cfg = write("bad.json", "{\n  \"task\": \"check-abc\",\n  \"model\" \"demo-power\"\n}\n");
  EXPECT_EQ(run("--config '" + cfg.string() + "' " + out_arg("o")), 1);
  EXPECT_NE(read(dir_ / "stderr").find("bad.json:3:"), std::string::npos) << read(dir_ / "stderr");
}

TEST_F(CliTest, TaskMustMatchConfig) {
  const auto cfg = write("c.json", R"({"task": "check-abc", "model": "demo-power", "samples": 100})");
  EXPECT_EQ(run("solve-fb --config '" + cfg.string() + "' " + out_arg("o")), 64);
  EXPECT_EQ(run("check-abc --config '" + cfg.string() + "' " + out_arg("p")), 0);
}

TEST_F(CliTest, CsvIsRoundTripFormatted) {
  ASSERT_EQ(run("solve-finite model=demo-finite-A grid=3 times=2 " + out_arg("o")), 0);
  const std::string csv = read(dir_ / "o" / "values.csv");
  EXPECT_EQ(csv.find('\r'), std::string::npos);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "t,x1,x2,U1,U2,converged");
  std::istringstream lines(csv);
  std::string line;
  std::getline(lines, line);
  int rows = 0;
  while (std::getline(lines, line)) {
    ++rows;
    std::istringstream cells(line);
    std::string cell;
    while (std::getline(cells, cell, ',')) {
      const double v = std::stod(cell);
      EXPECT_EQ(rmfg::io::format_number(v), cell);
      EXPECT_EQ(std::stod(rmfg::io::format_number(v)), v);
    }
  }
  EXPECT_EQ(rows, 9 * 2);
  EXPECT_EQ(csv.back(), '\n');
}

TEST_F(CliTest, RerunsAreIdenticalUpToTimestamp) {
  const std::string args = "check-monotone model=demo-finite-A samples=300 ";
  ASSERT_EQ(run(args + out_arg("a")), 0);
  ASSERT_EQ(run(args + out_arg("b")), 0);
  EXPECT_EQ(read(dir_ / "a" / "reports.json"), read(dir_ / "b" / "reports.json"));
  auto ma = read_json(dir_ / "a" / "manifest.json"), mb = read_json(dir_ / "b" / "manifest.json");
  ma.erase("timestamp");
  mb.erase("timestamp");
  EXPECT_EQ(ma, mb);
}

TEST_F(CliTest, SeedChangesSampledPairs) {
  const std::string args = "check-monotone model=demo-finite-A samples=300 ";
  ASSERT_EQ(run(args + "--seed 1 " + out_arg("a")), 0);
  ASSERT_EQ(run(args + "--seed 2 " + out_arg("b")), 0);
  EXPECT_EQ(read_json(dir_ / "b" / "manifest.json")["seed"], 2);
  EXPECT_NE(read_json(dir_ / "a" / "reports.json")["checks"], read_json(dir_ / "b" / "reports.json")["checks"]);
}

TEST_F(CliTest, CompositeRunsAggregateExitCodes) {
  const auto cfg = write("runs.json", R"({"runs": [
    {"name": "good", "task": "check-abc", "model": "demo-power", "samples": 100},
    {"name": "bad", "task": "check-abc", "model": "demo-power", "q": 3, "b": "nonconstant", "samples": 100}]})");
  EXPECT_EQ(run("--config '" + cfg.string() + "' " + out_arg("o")), 2);
  const auto man = read_json(dir_ / "o" / "manifest.json");
  ASSERT_EQ(man["runs"].size(), 2u);
  EXPECT_EQ(man["runs"][0]["exit_code"], 0);
  EXPECT_EQ(man["runs"][1]["exit_code"], 2);
  EXPECT_TRUE(fs::exists(dir_ / "o" / "good" / "reports.json"));
  EXPECT_EQ(run("check-abc --config '" + cfg.string() + "' " + out_arg("p")), 64);

  const auto broken = write("broken.json", R"({"runs": [
    {"name": "bad", "task": "check-abc", "model": "demo-power", "q": 3, "b": "nonconstant", "samples": 100},
    {"name": "err", "task": "solve-finite", "model": "demo-finite-A", "dt": -1}]})");
  EXPECT_EQ(run("--config '" + broken.string() + "' " + out_arg("q")), 1);
}

TEST(CliResolve, ShippedScenariosResolve) {
  int count = 0;
  for (const auto& e : fs::directory_iterator(RMFG_SCENARIO_DIR)) {
    if (e.path().extension() != ".json") continue;
    ++count;
    const auto doc = rmfg::io::read_json(e.path());
    const json runs = doc.contains("runs") ? doc["runs"] : json::array({doc});
    for (const auto& d : runs) EXPECT_NO_THROW(rmfg::cli::resolve(d)) << e.path();
  }
  EXPECT_GE(count, 12);
}

TEST(CliResolve, SplitsTaskAndModelParameters) {
  const auto r = rmfg::cli::resolve({{"task", "noise-expansion"}, {"model", "demo-noise"}, {"nx", 41}, {"dt", 1e-3}});
  EXPECT_EQ(r.model_params["nx"], 41);
  EXPECT_EQ(r.params.num("dt"), 1e-3);
  EXPECT_THROW(rmfg::cli::resolve({{"task", "noise-expansion"}, {"model", "demo-noise"}, {"dt", "x"}}), rmfg::InputError);
}
