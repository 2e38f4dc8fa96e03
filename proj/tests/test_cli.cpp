#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include <nlohmann/json.hpp>

#ifndef TERNKIN_CLI_PATH
#error "TERNKIN_CLI_PATH must point at the ternkin executable"
#endif

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    std::random_device rd;
    root_ = fs::temp_directory_path() / ("ternkin-cli-" + std::to_string(rd()) + std::to_string(rd()));
    fs::create_directories(root_);
  }
  void TearDown() override { fs::remove_all(root_); }

  fs::path write_config(const std::string& name, const json& j) {
    const auto p = root_ / name;
    std::ofstream(p) << j.dump(2);
    return p;
  }

  int run(const std::string& args, std::string* err = nullptr) {
    const auto log = root_ / "stderr.txt";
    const std::string cmd = std::string(TERNKIN_CLI_PATH) + " " + args + " > " + (root_ / "stdout.txt").string() +
                            " 2> " + log.string();
    const int status = std::system(cmd.c_str());
    if (err) *err = slurp(log);
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  static std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  std::string dir(const std::string& name) const { return (root_ / name).string(); }

  fs::path root_;
};

json head_on() {
  return {{"experiment", "simulate"},
          {"seed", 1},
          {"params",
           {{"eps2", 1.0},
            {"eps3", 1.5},
            {"horizon", 2.0},
            {"particles", json::array({{{"x", {0, 0}}, {"v", {1, 0}}}, {{"x", {3, 0}}, {"v", {-1, 0}}}})}}}};
}

json small_boltzmann() {
  return {{"experiment", "boltzmann"},
          {"seed", 11},
          {"params", {{"n", 500}, {"init", "maxwellian"}, {"dt", 0.01}, {"steps", 30}}}};
}

}  // namespace

TEST_F(Cli, HeadOnFixtureLogsSingleEvent) {
  const auto cfg = write_config("h.json", head_on());
  ASSERT_EQ(run("simulate --config " + cfg.string() + " --out " + dir("r")), 0);
  std::ifstream in(root_ / "r" / "events.jsonl");
  std::string line;
  std::vector<json> events;
  while (std::getline(in, line)) events.push_back(json::parse(line));
  ASSERT_EQ(events.size(), 1u);
  const auto& e = events[0];
  EXPECT_EQ(e["kind"], "binary");
  EXPECT_NEAR(e["t"].get<double>(), 1.0, 1e-12);
  EXPECT_EQ(e["indices"], json::array({0, 1}));
  EXPECT_NEAR(e["impact"][0][0].get<double>(), 1.0, 1e-12);
  EXPECT_NEAR(e["impact"][0][1].get<double>(), 0.0, 1e-12);
  EXPECT_NEAR(e["post"][0][0].get<double>(), -1.0, 1e-12);
  EXPECT_NEAR(e["post"][1][0].get<double>(), 1.0, 1e-12);
  const auto summary = json::parse(slurp(root_ / "r" / "summary.json"));
  EXPECT_TRUE(summary["all_pass"].get<bool>());
}

TEST_F(Cli, SameConfigTwiceGivesIdenticalCsv) {
  const auto cfg = write_config("b.json", small_boltzmann());
  ASSERT_EQ(run("boltzmann --config " + cfg.string() + " --out " + dir("a")), 0);
  ASSERT_EQ(run("boltzmann --config " + cfg.string() + " --out " + dir("b") + " --threads 3"), 0);
  const auto a = slurp(root_ / "a" / "moments.csv");
  EXPECT_GT(a.size(), 100u);
  EXPECT_EQ(a, slurp(root_ / "b" / "moments.csv"));
}

TEST_F(Cli, ThreadCountDoesNotChangeGeometryOutputs) {
  const json cfg = {{"experiment", "verify-geometry"},
                    {"seed", 5},
                    {"params",
                     {{"samples", 600000},
                      {"studies", json::array({{{"type", "strip"},
                                                {"ladder", {{"param", "rho"}, {"values", {0.1, 0.2, 0.4}}}}}})}}}};
  const auto p = write_config("g.json", cfg);
  ASSERT_EQ(run("run --config " + p.string() + " --out " + dir("a") + " --threads 1"), 0);
  ASSERT_EQ(run("run --config " + p.string() + " --out " + dir("b") + " --threads 4"), 0);
  EXPECT_EQ(slurp(root_ / "a" / "study_0_strip.csv"), slurp(root_ / "b" / "study_0_strip.csv"));
}

TEST_F(Cli, ManifestReproducesRun) {
  auto cfg = small_boltzmann();
  cfg["params"] = {{"steps", 20}, {"n", 300}, {"init", "maxwellian"}};  // defaults fill the rest
  const auto p = write_config("b.json", cfg);
  ASSERT_EQ(run("run --config " + p.string() + " --out " + dir("a") + " --seed 77"), 0);
  const auto m = json::parse(slurp(root_ / "a" / "manifest.json"));
  EXPECT_EQ(m["seed"], 77);
  EXPECT_EQ(m["params"]["kernel"], "scaled");
  EXPECT_TRUE(m["manifest"].contains("wall_time_s"));
  EXPECT_TRUE(m["manifest"]["versions"].contains("ternkin"));
  ASSERT_EQ(run("run --config " + (root_ / "a" / "manifest.json").string() + " --out " + dir("b")), 0);
  const auto m2 = json::parse(slurp(root_ / "b" / "manifest.json"));
  EXPECT_EQ(m["manifest"]["config_hash"], m2["manifest"]["config_hash"]);
  EXPECT_EQ(slurp(root_ / "a" / "moments.csv"), slurp(root_ / "b" / "moments.csv"));
}

TEST_F(Cli, FullCapReportsUnitRatio) {
  const json cfg = {{"experiment", "verify-geometry"},
                    {"seed", 2},
                    {"params", {{"samples", 50000}, {"studies", json::array({{{"type", "cap"}, {"d", 3}, {"alpha", 0.0}}})}}}};
  const auto p = write_config("c.json", cfg);
  ASSERT_EQ(run("run --config " + p.string() + " --out " + dir("r")), 0);
  const auto rep = json::parse(slurp(root_ / "r" / "report.json"));
  const double ratio = rep[0]["ratio"].get<double>(), se = rep[0]["ratio_se"].get<double>();
  EXPECT_LE(std::abs(ratio - 1.0), se + 1e-12);
}

TEST_F(Cli, SchemaViolationsExitTwo) {
  std::string err;
  auto cfg = head_on();
  cfg.erase("seed");
  EXPECT_EQ(run("simulate --config " + write_config("a.json", cfg).string() + " --out " + dir("x"), &err), 2);
  EXPECT_NE(err.find("seed"), std::string::npos);
  cfg = head_on();
  cfg["params"]["colour"] = "blue";
  EXPECT_EQ(run("simulate --config " + write_config("b.json", cfg).string() + " --out " + dir("x"), &err), 2);
  EXPECT_NE(err.find("colour"), std::string::npos);
  cfg = head_on();
  cfg["params"]["eps2"] = "big";
  EXPECT_EQ(run("simulate --config " + write_config("c.json", cfg).string() + " --out " + dir("x")), 2);
  cfg = head_on();
  cfg["params"]["eps2"] = 2.0;  // eps2 > eps3
  EXPECT_EQ(run("simulate --config " + write_config("d.json", cfg).string() + " --out " + dir("x")), 2);
  EXPECT_EQ(run("boltzmann --config " + write_config("e.json", head_on()).string() + " --out " + dir("x")), 2);
  std::ofstream(root_ / "broken.json") << "{ not json";
  EXPECT_EQ(run("run --config " + (root_ / "broken.json").string() + " --out " + dir("x")), 2);
  EXPECT_EQ(run("simulate --out " + dir("x")), 2);
  EXPECT_FALSE(fs::exists(root_ / "x"));
}

TEST_F(Cli, RunDirectoryIsNeverOverwritten) {
  const auto p = write_config("h.json", head_on());
  ASSERT_EQ(run("simulate --config " + p.string() + " --out " + dir("r")), 0);
  const auto before = slurp(root_ / "r" / "manifest.json");
  std::string err;
  EXPECT_EQ(run("simulate --config " + p.string() + " --out " + dir("r"), &err), 1);
  EXPECT_NE(err.find("overwrite"), std::string::npos);
  EXPECT_EQ(slurp(root_ / "r" / "manifest.json"), before);
}

TEST_F(Cli, FailedCheckGivesNonzeroExit) {
  const json cfg = {{"experiment", "verify-geometry"},
                    {"seed", 3},
                    {"params",
                     {{"samples", 100000},
                      {"studies", json::array({{{"type", "annulus-i1"},
                                                {"ladder", {{"param", "beta"}, {"values", {0.02, 0.04, 0.08}}}},
                                                {"expect_exponent", {1.8, 2.2}}}})}}}};
  EXPECT_EQ(run("run --config " + write_config("f.json", cfg).string() + " --out " + dir("r")), 3);
  const auto s = json::parse(slurp(root_ / "r" / "summary.json"));
  EXPECT_FALSE(s["all_pass"].get<bool>());
}

TEST_F(Cli, ReportPlotsEveryMomentSeries) {
  const auto p = write_config("b.json", small_boltzmann());
  ASSERT_EQ(run("boltzmann --config " + p.string() + " --out " + dir("r")), 0);
  ASSERT_EQ(run("emit-report " + dir("r")), 0);
  for (const char* m : {"mass", "momentum_0", "momentum_1", "energy", "fourth", "entropy"})
    EXPECT_TRUE(fs::exists(root_ / "r" / "report" / (std::string("moment_") + m + ".svg"))) << m;
  EXPECT_FALSE(fs::exists(root_ / "r" / "report" / "moment_fourth_se.svg"));
  const auto s = json::parse(slurp(root_ / "r" / "report" / "summary.json"));
  EXPECT_EQ(s["plots"].size(), 6u);
  EXPECT_TRUE(s["all_pass"].get<bool>());
}

TEST_F(Cli, RegressionPlotCarriesFittedSlope) {
  const json cfg = {{"experiment", "verify-geometry"},
                    {"seed", 4},
                    {"params",
                     {{"samples", 200000},
                      {"studies", json::array({{{"type", "annulus-i1"},
                                                {"ladder", {{"param", "beta"}, {"values", {0.02, 0.04, 0.08, 0.16}}}}}})}}}};
  ASSERT_EQ(run("run --config " + write_config("g.json", cfg).string() + " --out " + dir("r")), 0);
  ASSERT_EQ(run("emit-report " + dir("r")), 0);
  const auto svg = slurp(root_ / "r" / "report" / "study_0_annulus-i1.svg");
  EXPECT_NE(svg.find("fitted slope 1.0"), std::string::npos) << svg.substr(0, 400);
}

TEST_F(Cli, EmptySeriesWarnsWithoutPlot) {
  fs::create_directories(root_ / "r");
  std::ofstream(root_ / "r" / "moments.csv") << "t,mass,energy\n";
  std::ofstream(root_ / "r" / "summary.json") << json{{"experiment", "boltzmann"}, {"all_pass", true}}.dump();
  std::string err;
  EXPECT_EQ(run("emit-report " + dir("r"), &err), 0);
  EXPECT_NE(err.find("warning"), std::string::npos);
  const auto s = json::parse(slurp(root_ / "r" / "report" / "summary.json"));
  EXPECT_TRUE(s["plots"].empty());
  EXPECT_EQ(s["warnings"].size(), 1u);
}

TEST_F(Cli, ReportOnMissingResultsFails) {
  EXPECT_EQ(run("emit-report " + dir("nothing")), 1);
}
