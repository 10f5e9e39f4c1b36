#include <gtest/gtest.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "coind/coind.hpp"

namespace coind {
namespace {

namespace fs = std::filesystem;

fs::path scratch_root() {
  static const fs::path root = fs::temp_directory_path() / ("coind_experiment_" + std::to_string(::getpid()));
  return root;
}

RunConfig smoke_config(const std::string& out) {
  RunConfig cfg = load_run_config(std::string(COIND_SOURCE_DIR) + "/configs/smoke.json");
  cfg.output_dir = (scratch_root() / out).string();
  return cfg;
}

std::vector<std::string> read_lines(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

std::vector<double> split_numbers(const std::string& line) {
  std::vector<double> v;
  std::stringstream ss(line);
  for (std::string item; std::getline(ss, item, ',');) v.push_back(std::stod(item));
  return v;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(COIND_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST(RunConfigParse, UnknownKeyNamesPathAndLine) {
  const std::string text = "{\n  \"seed\": 3,\n  \"trainer\": {\n    \"lambda\": 1,\n    \"lamda\": 2\n  }\n}\n";
  try {
    (void)parse_run_config(text);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("trainer.lamda"), std::string::npos) << msg;
    EXPECT_NE(msg.find("line 5"), std::string::npos) << msg;
  }
}

TEST(RunConfigParse, InvalidValuesAndSyntax) {
  EXPECT_THROW((void)parse_run_config("{\"trainer\": {\"p_uncond\": 1.0}}"), ConfigError);
  EXPECT_THROW((void)parse_run_config("{\"sampler\": {\"gamma\": \"big\"}}"), ConfigError);
  EXPECT_THROW((void)parse_run_config("{\"seed\": 1,"), ConfigError);
  EXPECT_THROW((void)parse_run_config("{\"support\": {\"mode\": \"sideways\"}}"), ConfigError);
}

TEST(RunConfigParse, EmptyDocumentGivesDefaults) {
  const RunConfig c = parse_run_config("{}");
  EXPECT_EQ(to_json(c), to_json(default_run_config()));
  EXPECT_EQ(c.trainer.p_uncond, 0.3);
  EXPECT_EQ(c.train_space().train_support().size(), 3u);
}

TEST(RunConfigParse, CanonicalJsonRoundtripsAndHashIsStable) {
  const RunConfig a = parse_run_config("{\"seed\": 7, \"trainer\": {\"lambda\": 2, \"steps\": 10}}");
  const RunConfig b = parse_run_config("{\"trainer\": {\"steps\": 10,   \"lambda\": 2.0}, \"seed\": 7}");
  EXPECT_EQ(config_hash(a), config_hash(b));
  EXPECT_EQ(to_json(parse_run_config(to_json(a).dump())), to_json(a));
  RunConfig moved = a;
  moved.output_dir = "elsewhere";
  EXPECT_EQ(config_hash(moved), config_hash(a));
  RunConfig reseeded = a;
  reseeded.seed = 8;
  EXPECT_NE(config_hash(reseeded), config_hash(a));
}

TEST(RunConfigParse, ShippedConfigsAreValid) {
  for (const char* name : {"smoke.json", "orthogonal_2d.json", "full_2d.json"}) {
    EXPECT_NO_THROW(validate_run_config(load_run_config(std::string(COIND_SOURCE_DIR) + "/configs/" + name))) << name;
  }
}

class SmokeRun : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    fs::remove_all(scratch_root());
    const auto start = std::chrono::steady_clock::now();
    report_ = new ExperimentReport(run_experiment(smoke_config("a")));
    seconds_ = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
  static void TearDownTestSuite() {
    delete report_;
    report_ = nullptr;
    fs::remove_all(scratch_root());
  }
  static fs::path dir() { return scratch_root() / "a"; }

  static ExperimentReport* report_;
  static double seconds_;
};

ExperimentReport* SmokeRun::report_ = nullptr;
double SmokeRun::seconds_ = 0.0;

TEST_F(SmokeRun, CompletesQuicklyWithAllMetrics) {
  EXPECT_LT(seconds_, 120.0);
  const Json doc = Json::parse(detail::read_text(dir() / "metrics.json"));
  for (const char* arm : {"vanilla", "coind"}) {
    const Json& a = doc.at("arms").at(arm);
    for (const char* key : {"lambda", "jsd", "cs", "w2_unseen", "downstream", "implicit", "final_l_score"}) {
      EXPECT_TRUE(a.contains(key)) << arm << "." << key;
    }
    EXPECT_TRUE(a.at("cs").contains("cs_unseen"));
    EXPECT_TRUE(a.at("downstream").contains("wga"));
  }
  EXPECT_TRUE(doc.at("arms").contains("full_vanilla"));
  EXPECT_TRUE(doc.contains("real_full_support_classifier"));
  EXPECT_EQ(doc.at("arms").at("coind").at("lambda").get<double>(), 10.0);
  for (const char* f : {"config.json", "train.csv", "metrics.csv", "vanilla/model.ckpt", "coind/loss.csv",
                        "coind/synthetic.csv", "coind/samples_+1_+1.csv"}) {
    EXPECT_TRUE(fs::exists(dir() / f)) << f;
  }
  EXPECT_FALSE(fs::exists(dir() / "FAILED"));
}

TEST_F(SmokeRun, TrainingDataRespectsSupport) {
  const RunConfig cfg = smoke_config("a");
  const auto train = detail::read_dataset(dir() / "train.csv", cfg.train_space());
  EXPECT_EQ(train.size(), cfg.trainer.train_samples);
  for (const auto& t : train.labels) EXPECT_NE(t, (AttributeTuple{1, 1}));
}

TEST_F(SmokeRun, RepeatedRunIsByteIdentical) {
  (void)run_experiment(smoke_config("b"));
  EXPECT_EQ(detail::read_text(dir() / "metrics.csv"), detail::read_text(scratch_root() / "b" / "metrics.csv"));
  EXPECT_EQ(detail::read_text(dir() / "coind" / "model.ckpt"),
            detail::read_text(scratch_root() / "b" / "coind" / "model.ckpt"));
}

TEST_F(SmokeRun, CheckpointsRememberTheirArm) {
  const RunConfig cfg = smoke_config("a");
  for (const char* arm : {"vanilla", "coind", "full_vanilla"}) {
    const LoadedModel m = load_arm_model(dir() / arm / "model.ckpt");
    EXPECT_EQ(m.source_arm, arm);
    EXPECT_EQ(m.config_hash, config_hash(cfg));
  }
  const std::string bytes = detail::read_text(dir() / "coind" / "model.ckpt");
  const fs::path cut = scratch_root() / "cut.ckpt";
  detail::write_text(cut, bytes.substr(0, bytes.size() / 2));
  EXPECT_THROW((void)load_arm_model(cut), FormatError);
}

TEST_F(SmokeRun, ExportPlotsWritesPanelsAndGrids) {
  PlotExportOptions opt;
  opt.grid_w = 7;
  opt.grid_h = 5;
  export_plot_data(dir(), opt);
  const fs::path plots = dir() / "plots";
  for (const char* p : {"panel_train.csv", "panel_true.csv", "panel_vanilla.csv", "panel_coind.csv"}) {
    EXPECT_GT(read_lines(plots / p).size(), 1u) << p;
  }
  for (const char* g : {"grid_oracle.csv", "grid_vanilla.csv", "grid_coind.csv"}) {
    EXPECT_EQ(read_lines(plots / g).size(), 1u + 7u * 5u) << g;
  }
  const auto lines = read_lines(plots / "grid_oracle.csv");
  for (std::size_t i : {1u, 13u, 35u}) {
    const auto v = split_numbers(lines[i]);
    EXPECT_NEAR(v[2], (1.0 - v[0]) / 0.09, 1e-9);
    EXPECT_NEAR(v[3], (1.0 - v[1]) / 0.09, 1e-9);
  }
  EXPECT_THROW(export_plot_data(scratch_root() / "missing"), StateError);
}

TEST_F(SmokeRun, CliEvalReportsCheckpointSources) {
  EXPECT_EQ(run_cli("eval --run " + dir().string()), 0);
  const Json doc = Json::parse(detail::read_text(dir() / "eval.json"));
  EXPECT_EQ(doc.at("checkpoints").at("coind").at("source_arm"), "coind");
  EXPECT_TRUE(doc.at("checkpoints").at("vanilla").at("config_hash_matches").get<bool>());
}

TEST_F(SmokeRun, CliSampleWritesRequestedCount) {
  const fs::path out = scratch_root() / "s.csv";
  EXPECT_EQ(run_cli("sample --run " + dir().string() + " --tuple +1,+1 -n 25 -o " + out.string()), 0);
  EXPECT_EQ(read_lines(out).size(), 26u);
  EXPECT_EQ(run_cli("sample --run " + dir().string() + " --tuple +1,0 -n 5"), 2);
}

TEST(Failure, NumericBlowupLeavesMarker) {
  RunConfig cfg = smoke_config("diverged");
  cfg.trainer.learning_rate = 1e300;
  EXPECT_THROW((void)run_experiment(cfg), NumericError);
  EXPECT_TRUE(fs::exists(fs::path(cfg.output_dir) / "FAILED"));
  EXPECT_FALSE(fs::exists(fs::path(cfg.output_dir) / "metrics.json"));
  fs::remove_all(cfg.output_dir);
}

TEST(Cli, ExitCodes) {
  const fs::path dir = scratch_root() / "cli";
  fs::create_directories(dir);
  EXPECT_EQ(run_cli("check --scratch " + (dir / "check").string()), 0);
  EXPECT_EQ(run_cli(""), 1);
  EXPECT_EQ(run_cli("frobnicate"), 1);
  detail::write_text(dir / "bad.json", "{\"trainer\": {\"stepz\": 3}}\n");
  EXPECT_EQ(run_cli("run -c " + (dir / "bad.json").string()), 2);
  EXPECT_EQ(run_cli("run -c " + (dir / "absent.json").string()), 2);
  std::string smoke = detail::read_text(std::string(COIND_SOURCE_DIR) + "/configs/smoke.json");
  smoke.replace(smoke.find("0.002"), 5, "1e300");
  detail::write_text(dir / "diverge.json", smoke);
  EXPECT_EQ(run_cli("run -c " + (dir / "diverge.json").string() + " -o " + (dir / "run").string()), 3);
  fs::remove_all(dir);
}

TEST(Invariants, AllSelfChecksPass) {
  const fs::path dir = scratch_root() / "inv";
  for (const auto& r : run_invariant_checks(dir)) EXPECT_TRUE(r.pass) << r.name << ": " << r.detail;
  fs::remove_all(dir);
}

}  // namespace
}  // namespace coind
