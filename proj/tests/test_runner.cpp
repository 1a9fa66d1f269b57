#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "plreg/config.hpp"
#include "plreg/csv.hpp"
#include "plreg/errors.hpp"
#include "plreg/runner.hpp"

using namespace plreg;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("plreg_runner_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) rows.push_back(split(line, ','));
  return rows;
}

ExperimentConfig small(const std::string& task_json, const std::string& name) {
  ExperimentConfig c = parse_config_text(R"({"task": )" + task_json + R"(, "num_classes": 4,
      "num_known": 2, "samples_per_class_max": 16, "noise_dims": 2, "dim": 6, "depth": 1,
      "epochs": 2, "batch_size": 8, "eval_interval": 1, "test_per_class": 5})");
  c.output_dir = fresh_dir(name).string();
  return c;
}

class QuietLog : public ::testing::Test {
 protected:
  std::ostringstream log;
};

}  // namespace

TEST_F(QuietLog, GcdTwoSeedsWritesOneRowPerSeed) {
  ExperimentConfig c = small(R"("gcd")", "gcd");
  c.seeds = {0, 1};
  c.preset = "table4_cub";
  ASSERT_EQ(run(c, log), 0) << log.str();
  const auto metrics = read_csv(fs::path(c.output_dir) / "metrics.csv");
  ASSERT_EQ(metrics.size(), 3u);
  EXPECT_EQ(metrics[0], metrics_header(Task::Gcd));
  EXPECT_EQ(metrics[1][0], "gcd");
  EXPECT_EQ(metrics[1][1], "table4_cub");
  EXPECT_EQ(metrics[1][2], "0");
  EXPECT_EQ(metrics[2][2], "1");
  EXPECT_EQ(metrics[1][3], "none");
  const auto traces = read_csv(fs::path(c.output_dir) / "traces.csv");
  EXPECT_EQ(traces[0], traces_header());
  EXPECT_EQ(traces.size(), 1u + 2 * 2);
  EXPECT_FALSE(fs::exists(fs::path(c.output_dir) / "masks.csv"));
  fs::remove_all(c.output_dir);
}

TEST_F(QuietLog, RerunIsByteIdentical) {
  ExperimentConfig c = small(R"("gcd")", "determinism");
  c.seeds = {3, 4};
  c.train.weights = {1, 0.5, 0.1};
  ASSERT_EQ(run(c, log), 0);
  const std::string first = slurp(fs::path(c.output_dir) / "metrics.csv");
  const std::string first_traces = slurp(fs::path(c.output_dir) / "traces.csv");
  ASSERT_EQ(run(c, log), 0);
  EXPECT_EQ(slurp(fs::path(c.output_dir) / "metrics.csv"), first);
  EXPECT_EQ(slurp(fs::path(c.output_dir) / "traces.csv"), first_traces);
  fs::remove_all(c.output_dir);
}

TEST_F(QuietLog, ThreadCountDoesNotChangeOutputs) {
  ExperimentConfig c = small(R"("gcd")", "threads");
  c.seeds = {0, 1, 2};
  setenv("PLREG_THREADS", "1", 1);
  ASSERT_EQ(run(c, log), 0);
  const std::string serial = slurp(fs::path(c.output_dir) / "metrics.csv");
  setenv("PLREG_THREADS", "3", 1);
  ASSERT_EQ(run(c, log), 0);
  unsetenv("PLREG_THREADS");
  EXPECT_EQ(slurp(fs::path(c.output_dir) / "metrics.csv"), serial);
  fs::remove_all(c.output_dir);
}

TEST(WorkerCount, HonoursEnvironment) {
  setenv("PLREG_THREADS", "2", 1);
  EXPECT_EQ(worker_count(10), 2u);
  EXPECT_EQ(worker_count(1), 1u);
  setenv("PLREG_THREADS", "zero", 1);
  EXPECT_THROW(worker_count(3), ConfigError);
  setenv("PLREG_THREADS", "0", 1);
  EXPECT_THROW(worker_count(3), ConfigError);
  unsetenv("PLREG_THREADS");
  EXPECT_GE(worker_count(4), 1u);
}

TEST_F(QuietLog, CilWritesMasksPerSessionAndDim) {
  ExperimentConfig c = small(R"("cil")", "cil");
  c.spec.num_classes = 10;
  c.spec.num_known = 5;
  c.sessions = 5;
  ASSERT_EQ(run(c, log), 0) << log.str();
  const auto masks = read_csv(fs::path(c.output_dir) / "masks.csv");
  EXPECT_EQ(masks[0], masks_header());
  EXPECT_EQ(masks.size(), 1u + 6 * c.dim);
  const auto metrics = read_csv(fs::path(c.output_dir) / "metrics.csv");
  EXPECT_EQ(metrics[0], metrics_header(Task::Cil));
  ASSERT_EQ(metrics.size(), 7u);
  for (std::size_t i = 1; i < metrics.size(); ++i) {
    EXPECT_EQ(metrics[i][3], std::to_string(i - 1));
    EXPECT_EQ(metrics[i][5], metrics[1][5]);
  }

  ASSERT_EQ(export_masks(c.output_dir, log), 0);
  const auto heat = read_csv(fs::path(c.output_dir) / "masks_heatmap.csv");
  ASSERT_EQ(heat.size(), 1u + 6 * 2);
  EXPECT_EQ(heat[0].size(), 3u + c.dim);
  EXPECT_EQ(heat[1][2], "normalized");
  EXPECT_EQ(heat[2][2], "binarized");
  for (std::size_t d = 0; d < c.dim; ++d) EXPECT_EQ(heat[2][3 + d], masks[1 + d][4]);
  fs::remove_all(c.output_dir);
}

TEST_F(QuietLog, ExportMasksRejectsNonCilRuns) {
  ExperimentConfig c = small(R"("gcd")", "export_gcd");
  ASSERT_EQ(run(c, log), 0);
  EXPECT_THROW(export_masks(c.output_dir, log), UsageError);
  EXPECT_THROW(export_masks(fresh_dir("missing"), log), ConfigError);
  fs::remove_all(c.output_dir);
}

TEST_F(QuietLog, MdgWritesOneRowPerHeldOutDomain) {
  ExperimentConfig c = small(R"("mdg_gcd", "num_domains": 3, "domain_dims": 2, "domain_shift": 1.0)",
                             "mdg");
  ASSERT_EQ(run(c, log), 0) << log.str();
  const auto metrics = read_csv(fs::path(c.output_dir) / "metrics.csv");
  ASSERT_EQ(metrics.size(), 4u);
  for (int d = 0; d < 3; ++d) EXPECT_EQ(metrics[1 + static_cast<std::size_t>(d)][3], std::to_string(d));
  c.held_out_domain = 2;
  ASSERT_EQ(run(c, log), 0);
  const auto one = read_csv(fs::path(c.output_dir) / "metrics.csv");
  ASSERT_EQ(one.size(), 2u);
  EXPECT_EQ(one[1], metrics[3]);
  fs::remove_all(c.output_dir);
}

TEST_F(QuietLog, ManifestReconstructsTheRun) {
  ExperimentConfig c = small(R"("cil")", "manifest");
  c.spec.num_classes = 6;
  c.spec.num_known = 3;
  c.sessions = 3;
  ASSERT_EQ(run(c, log), 0);
  const std::string manifest = slurp(fs::path(c.output_dir) / "manifest.txt");
  EXPECT_EQ(manifest.rfind("plreg manifest\n", 0), 0u);
  EXPECT_NE(manifest.find("version: " + version_string()), std::string::npos);
  EXPECT_NE(manifest.find("status: ok"), std::string::npos);
  EXPECT_NE(manifest.find("timestamp: "), std::string::npos);
  const ExperimentConfig back = parse_config(fs::path(c.output_dir) / "manifest.txt");
  EXPECT_TRUE(back == c);
  const std::string metrics = slurp(fs::path(c.output_dir) / "metrics.csv");
  ExperimentConfig again = back;
  again.output_dir = fresh_dir("manifest_replay").string();
  ASSERT_EQ(run(again, log), 0);
  EXPECT_EQ(slurp(fs::path(again.output_dir) / "metrics.csv"), metrics);
  fs::remove_all(c.output_dir);
  fs::remove_all(again.output_dir);
}

TEST_F(QuietLog, TrainingAbortIsReportedAndFlagged) {
  ExperimentConfig c = small(R"("gcd")", "abort");
  c.seeds = {0, 1};
  c.train.optim.lr = 1e300;
  c.train.optim.epochs = 3;
  EXPECT_EQ(run(c, log), 1);
  const std::string manifest = slurp(fs::path(c.output_dir) / "manifest.txt");
  EXPECT_NE(manifest.find("status: failed: seed 0"), std::string::npos) << manifest;
  EXPECT_NE(log.str().find("aborted"), std::string::npos);
  fs::remove_all(c.output_dir);
}

TEST_F(QuietLog, SweepSummaryAndSingleValueMatchesRun) {
  ExperimentConfig c = small(R"("gcd")", "sweep");
  c.seeds = {0, 1};
  const std::vector<double> values{5e-4, 1e-3, 2e-3};
  ASSERT_EQ(sweep(c, "w_p1", values, log), 0) << log.str();
  const auto rows = read_csv(fs::path(c.output_dir) / "sweep.csv");
  EXPECT_EQ(rows[0], (std::vector<std::string>{"axis", "value", "seed", "acc_all", "acc_known",
                                               "acc_unknown"}));
  ASSERT_EQ(rows.size(), 1u + 3 * 3);
  std::size_t summaries = 0;
  for (std::size_t i = 1; i < rows.size(); i += 3) {
    EXPECT_EQ(rows[i + 2][2], "mean");
    ++summaries;
    for (std::size_t k = 3; k < 6; ++k) {
      const double mean = (std::stod(rows[i][k]) + std::stod(rows[i + 1][k])) / 2.0;
      EXPECT_NEAR(std::stod(rows[i + 2][k]), mean, 1e-12);
    }
  }
  EXPECT_EQ(summaries, 3u);

  const std::vector<double> single{1e-3};
  ASSERT_EQ(sweep(c, "w_p1", single, log), 0);
  const auto swept = read_csv(fs::path(c.output_dir) / "sweep.csv");
  ExperimentConfig direct = c;
  direct.train.weights.w_p1 = 1e-3;
  direct.output_dir = fresh_dir("sweep_direct").string();
  ASSERT_EQ(run(direct, log), 0);
  const auto metrics = read_csv(fs::path(direct.output_dir) / "metrics.csv");
  for (std::size_t s = 0; s < 2; ++s)
    for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(swept[1 + s][3 + k], metrics[1 + s][4 + k]);
  fs::remove_all(c.output_dir);
  fs::remove_all(direct.output_dir);
}

TEST_F(QuietLog, SweepCilAndErrors) {
  ExperimentConfig c = small(R"("cil")", "sweep_cil");
  c.spec.num_classes = 6;
  c.spec.num_known = 3;
  c.sessions = 3;
  const std::vector<double> values{0.5, 1.0};
  ASSERT_EQ(sweep(c, "lambda_kd", values, log), 0);
  const auto rows = read_csv(fs::path(c.output_dir) / "sweep.csv");
  EXPECT_EQ(rows[0], (std::vector<std::string>{"axis", "value", "seed", "avg_acc"}));
  EXPECT_EQ(rows.size(), 1u + 2 * 2);
  EXPECT_THROW(sweep(c, "w_p1", {}, log), UsageError);
  EXPECT_THROW(sweep(c, "depth", values, log), UsageError);
  fs::remove_all(c.output_dir);
}
