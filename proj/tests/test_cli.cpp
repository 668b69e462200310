#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "deriva/cli.hpp"

namespace fs = std::filesystem;
using deriva::cli::run_cli;
using nlohmann::json;

namespace {

const fs::path kSource = DERIVA_SOURCE_DIR;

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    std::random_device rd;
    dir_ = fs::temp_directory_path() / ("deriva_cli_" + std::to_string(rd()) + std::to_string(rd()));
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  int run(std::vector<std::string> args) {
    out_.str("");
    err_.str("");
    return run_cli(args, out_, err_);
  }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  void write(const std::string& name, const json& j) const { std::ofstream(dir_ / name) << j.dump(2); }

  static std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
  }

  fs::path only_run(const std::string& prefix) const {
    fs::path found;
    int n = 0;
    for (const auto& e : fs::directory_iterator(dir_ / "runs"))
      if (e.path().filename().string().rfind(prefix, 0) == 0) {
        found = e.path();
        ++n;
      }
    EXPECT_EQ(n, 1);
    return found;
  }

  // A 200-row Bajaj-shaped table with every variable masked.
  std::string bajaj_csv() {
    write("bajaj_spec.json", {{"preset", "bajaj"}, {"rows", 200}, {"seed", 5}});
    EXPECT_EQ(run({"synth", path("bajaj_spec.json"), "-o", path("bajaj.csv")}), 0) << err_.str();
    return path("bajaj.csv");
  }

  std::string sma5_config(const std::string& fixture) {
    write("sma5.json", {{"backend", {{"kind", "scripted"}}},
                        {"variables", json::array({{{"formula", "SMA5"}, {"fixture_path", fixture}}})}});
    return path("sma5.json");
  }

  fs::path dir_;
  std::ostringstream out_, err_;
};

}  // namespace

TEST_F(CliTest, SynthPresetWritesCsvAndManifest) {
  ASSERT_EQ(run({"synth", "--preset", "bajaj", "-o", path("a.csv")}), 0) << err_.str();
  const auto manifest = json::parse(slurp(path("a.csv.truth.json")));
  EXPECT_EQ(manifest["rows"], 3600);
  EXPECT_EQ(manifest["synthesis"]["derived"].size(), 6u);
  std::size_t cells = 0;
  for (const auto& r : manifest["records"]) cells += r["cells"].size();
  EXPECT_EQ(cells, 334u);
}

TEST_F(CliTest, SynthIsDeterministic) {
  ASSERT_EQ(run({"synth", "--preset", "bmi", "-o", path("a.csv"), "--seed", "9"}), 0);
  ASSERT_EQ(run({"synth", "--preset", "bmi", "-o", path("b.csv"), "--seed", "9"}), 0);
  EXPECT_EQ(slurp(path("a.csv")), slurp(path("b.csv")));
  EXPECT_EQ(slurp(path("a.csv.truth.json")), slurp(path("b.csv.truth.json")));
  ASSERT_EQ(run({"synth", "--preset", "bmi", "-o", path("c.csv"), "--seed", "10"}), 0);
  EXPECT_NE(slurp(path("a.csv")), slurp(path("c.csv")));
}

TEST_F(CliTest, SynthCyclicSpecExitsTwo) {
  write("cyc.json", {{"rows", 20},
                     {"base_columns", json::array({{{"name", "height"}, {"generator", "uniform"}, {"lo", 1.5}, {"hi", 2.0}}})},
                     {"derived", {"BMI", "BMI_WEIGHT"}}});
  EXPECT_EQ(run({"synth", path("cyc.json"), "-o", path("cyc.csv")}), 2);
  EXPECT_NE(err_.str().find("CyclicDerivation"), std::string::npos);
}

TEST_F(CliTest, UsageErrorsExitTwo) {
  EXPECT_EQ(run({}), 2);
  EXPECT_EQ(run({"frobnicate"}), 2);
  EXPECT_EQ(run({"synth", "--preset", "nope", "-o", path("x.csv")}), 2);
  EXPECT_EQ(run({"--help"}), 0);
}

TEST_F(CliTest, ImputeBmiSucceeds) {
  ASSERT_EQ(run({"synth", "--preset", "bmi", "-o", path("bmi.csv")}), 0);
  write("bmi.json", {{"backend", {{"kind", "scripted"}}},
                     {"variables", json::array({{{"formula", "BMI"},
                                                 {"fixture_path", (kSource / "fixtures/bmi.json").string()}}})}});
  ASSERT_EQ(run({"impute", path("bmi.csv"), "-c", path("bmi.json"), "--out-dir", path("runs"), "--truth",
                 path("bmi.csv.truth.json")}),
            0)
      << err_.str();
  const auto run_dir = only_run("run-");
  EXPECT_NE(slurp(run_dir / "variables/bmi/final_program.dsl").find("weight[t] / pow(height[t], 2)"),
            std::string::npos);
  const auto manifest = json::parse(slurp(run_dir / "manifest.json"));
  EXPECT_EQ(manifest["variables"][0]["workflow"]["target_column"], "bmi");
  EXPECT_TRUE(manifest.contains("started_at"));
  const auto report = json::parse(slurp(run_dir / "report.json"));
  EXPECT_DOUBLE_EQ(report["summary"]["rmse"].get<double>(), 0.0);
  EXPECT_TRUE(fs::exists(run_dir / "imputed.csv"));
}

TEST_F(CliTest, ImputeRunDirectoriesAreNeverReused) {
  const auto data = bajaj_csv();
  const auto cfg = sma5_config((kSource / "fixtures/sma5_correct.json").string());
  ASSERT_EQ(run({"impute", data, "-c", cfg, "--out-dir", path("runs")}), 0) << err_.str();
  ASSERT_EQ(run({"impute", data, "-c", cfg, "--out-dir", path("runs")}), 0) << err_.str();
  std::size_t n = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(dir_ / "runs")) ++n;
  EXPECT_EQ(n, 2u);
}

TEST_F(CliTest, ImputePersistentWrongFormulaExitsOne) {
  const auto data = bajaj_csv();
  const auto cfg = sma5_config((kSource / "fixtures/sma5_four_wrong.json").string());
  EXPECT_EQ(run({"impute", data, "-c", cfg, "--out-dir", path("runs")}), 1);
  EXPECT_NE(out_.str().find("unable to impute"), std::string::npos);
  const auto run_dir = only_run("run-");
  EXPECT_TRUE(fs::exists(run_dir / "variables/sma5/attempts.json"));
  EXPECT_FALSE(fs::exists(run_dir / "variables/sma5/final_program.dsl"));
  EXPECT_EQ(slurp(run_dir / "imputed.csv"), slurp(data));
}

TEST_F(CliTest, ImputeHttpWithoutKeyExitsTwo) {
  const auto data = bajaj_csv();
  ::unsetenv("DERIVA_TEST_UNSET_KEY");
  write("http.json", {{"backend", {{"kind", "http"}, {"base_url", "http://127.0.0.1:9/v1"},
                                   {"api_key_env_var", "DERIVA_TEST_UNSET_KEY"}}},
                      {"variables", {"SMA5"}}});
  EXPECT_EQ(run({"impute", data, "-c", path("http.json"), "--out-dir", path("runs")}), 2);
  EXPECT_NE(err_.str().find("AuthMissing"), std::string::npos);
  EXPECT_FALSE(fs::exists(dir_ / "runs"));
}

TEST_F(CliTest, FixtureFlagOverridesConfig) {
  const auto data = bajaj_csv();
  const auto cfg = sma5_config((kSource / "fixtures/sma5_four_wrong.json").string());
  EXPECT_EQ(run({"impute", data, "-c", cfg, "--out-dir", path("runs"), "--fixture",
                 (kSource / "fixtures/sma5_correct.json").string()}),
            0)
      << err_.str();
}

TEST_F(CliTest, InspectShowsReflectorDiagnosis) {
  const auto data = bajaj_csv();
  const auto cfg = sma5_config((kSource / "fixtures/sma5_off_by_one.json").string());
  ASSERT_EQ(run({"impute", data, "-c", cfg, "--out-dir", path("runs")}), 0) << err_.str();
  const auto run_dir = only_run("run-");
  ASSERT_EQ(run({"inspect", run_dir.string()}), 0) << err_.str();
  EXPECT_NE(out_.str().find("range of rows used"), std::string::npos);
  EXPECT_NE(out_.str().find("attempts: 2"), std::string::npos);
  EXPECT_NE(out_.str().find("mean(close[t], -4, 0)"), std::string::npos);
}

TEST_F(CliTest, InspectEmptyDirExitsTwo) {
  fs::create_directories(dir_ / "empty");
  EXPECT_EQ(run({"inspect", path("empty")}), 2);
  EXPECT_NE(err_.str().find("MissingArtifact"), std::string::npos);
  EXPECT_EQ(run({"inspect", path("does-not-exist")}), 2);
}

TEST_F(CliTest, EvaluateKnownDiffVector) {
  std::ofstream(dir_ / "imp.csv") << "x,y\n3,0\n4,0\n";
  write("truth.json", {{"rows", 2},
                       {"columns", {"x", "y"}},
                       {"epsilons", {{"y", 0.01}}},
                       {"records", json::array({{{"column", "y"},
                                                 {"cells", json::array({{{"row", 0}, {"column", 1}, {"truth", 3.0}},
                                                                        {{"row", 1}, {"column", 1}, {"truth", 4.0}}})}}})}});
  ASSERT_EQ(run({"evaluate", path("imp.csv"), path("truth.json"), "-o", path("r.json")}), 0) << err_.str();
  const auto r = json::parse(slurp(path("r.json")));
  EXPECT_NEAR(r["per_variable"]["y"]["rmse"].get<double>(), std::sqrt(12.5), 1e-12);
  EXPECT_NE(out_.str().find("Summary"), std::string::npos);
}

TEST_F(CliTest, EvaluateShapeMismatchExitsTwo) {
  ASSERT_EQ(run({"synth", "--preset", "bmi", "-o", path("bmi.csv")}), 0);
  std::ofstream(dir_ / "short.csv") << "weight,height,bmi\n1,2,3\n";
  EXPECT_EQ(run({"evaluate", path("short.csv"), path("bmi.csv.truth.json")}), 2);
  EXPECT_NE(err_.str().find("ShapeMismatch"), std::string::npos);
}

TEST_F(CliTest, EvaluateFindAccuracyAtLeastAccuracy) {
  // Only bmi is imputed; the masked weight and height cells stay missing.
  ASSERT_EQ(run({"synth", "--preset", "bmi", "-o", path("bmi.csv")}), 0);
  write("bmi.json", {{"backend", {{"kind", "scripted"}}},
                     {"variables", json::array({{{"formula", "BMI"},
                                                 {"fixture_path", (kSource / "fixtures/bmi.json").string()}}})}});
  ASSERT_EQ(run({"impute", path("bmi.csv"), "-c", path("bmi.json"), "--out-dir", path("runs")}), 0);
  const auto run_dir = only_run("run-");
  ASSERT_EQ(run({"evaluate", (run_dir / "imputed.csv").string(), path("bmi.csv.truth.json"), "-o", path("r.json")}),
            0);
  const auto s = json::parse(slurp(path("r.json")))["summary"];
  EXPECT_GE(s["find_accuracy"].get<double>(), s["accuracy"].get<double>());
  EXPECT_NEAR(s["accuracy"].get<double>(), 1.0 / 3.0, 1e-12);
}

TEST_F(CliTest, BenchBuiltinPasses) {
  ASSERT_EQ(run({"bench", "--builtin", "zero-rmse", "--jobs", "4", "--out-dir", path("runs")}), 0) << err_.str();
  const auto report = json::parse(slurp(only_run("bench-") / "report.json"));
  EXPECT_TRUE(report["passed"].get<bool>());
  EXPECT_EQ(report["tuples"].size(), 12u);
  for (const auto& t : report["tuples"]) {
    EXPECT_LE(t["rmse"].get<double>(), 1e-9) << t["name"];
    EXPECT_EQ(t["untouched_cells_modified"], 0);
  }
  EXPECT_GT(report["tuples"][0]["baseline_rmse"].get<double>(), 1.0);
}

TEST_F(CliTest, BenchSabotagedFixtureExitsOne) {
  EXPECT_EQ(run({"bench", (kSource / "benches/sabotaged.json").string(), "--out-dir", path("runs")}), 1);
  const auto report = json::parse(slurp(only_run("bench-") / "report.json"));
  EXPECT_TRUE(report["tuples"][0]["passed"].get<bool>());
  EXPECT_FALSE(report["tuples"][1]["passed"].get<bool>());
  EXPECT_NE(err_.str().find("sma5/four-wrong"), std::string::npos);
}

TEST_F(CliTest, BundledSuiteMatchesBuiltin) {
  std::ifstream in(kSource / "benches/zero_rmse.json");
  EXPECT_EQ(json::parse(in), deriva::cli::builtin_suite("zero-rmse"));
}

TEST_F(CliTest, BinaryExitCodes) {
  const std::string cli = DERIVA_CLI_PATH;
  EXPECT_EQ(WEXITSTATUS(std::system((cli + " inspect " + path("nothing") + " 2>/dev/null").c_str())), 2);
  EXPECT_EQ(WEXITSTATUS(std::system((cli + " synth --preset bmi -o " + path("b.csv") + " >/dev/null").c_str())), 0);
}
