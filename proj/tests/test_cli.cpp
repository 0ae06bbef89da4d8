#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "app.hpp"
#include "gripstab/checkpoint.hpp"
#include "gripstab/datasets.hpp"
#include "gripstab/evaluation.hpp"
#include "test_support.hpp"

using namespace gripstab;
using namespace gripstab::app;
using gripstab::testing::TempDir;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

// 4 classes x 8 cells at 32x32; gear_2 is held out, leaving 24 training points.
Invocation smoke(const std::filesystem::path& root) {
  const auto j = nlohmann::json::parse(R"({
    "seed": 3,
    "pullsim": {"classes": ["gear", "ball_bearing", "axle_long", "gear_2"],
                "grid": {"mode": "sampled", "per_class": 8}},
    "dataset": {"path": "ds", "held_out_classes": ["gear_2"], "n_folds": 3},
    "model": {"kind": "snn", "height": 32, "width": 32},
    "training": {"batch_size": 4, "max_steps": 4, "eval_every": 2, "learning_rate": 0.01, "run_dir": "run"}
  })");
  Invocation inv;
  inv.config = config_from_json(j);
  inv.config.data_root = root;
  return inv;
}

int run_quiet(const std::string& cmd, const Invocation& inv, std::string* err_text = nullptr) {
  std::ostringstream out, err;
  const int code = run(cmd, inv, out, err);
  if (err_text) *err_text = err.str();
  return code;
}

}  // namespace

TEST(Config, DefaultsValidate) {
  const auto c = default_config();
  EXPECT_TRUE(c.violations().empty());
  EXPECT_EQ(c.classes.size(), 6u);
  EXPECT_EQ(c.training.learning_rate, 0.1);
  EXPECT_EQ(c.simulator.image_width, c.model.width);
}

TEST(Config, JsonRoundTrip) {
  auto c = default_config();
  c.seed = 17;
  c.grid.mode = "cartesian";
  c.grid.ys = {0.0, 0.001};
  c.grid.zs = {0.0};
  c.grid.thetas = {0.0};
  c.grid.grip_forces = {20, 25};
  c.training.max_steps = 33;
  c.train_mode = "single";
  const auto back = config_from_json(nlohmann::json::parse(config_to_json(c).dump()));
  EXPECT_EQ(config_to_json(back).dump(), config_to_json(c).dump());
}

TEST(Config, UnknownKeysRejected) {
  EXPECT_THROW(config_from_json(nlohmann::json::parse(R"({"trainig": {}})")), ValidationError);
  EXPECT_THROW(config_from_json(nlohmann::json::parse(R"({"training": {"lr": 0.1}})")), ValidationError);
  EXPECT_THROW(config_from_json(nlohmann::json::parse(R"({"pullsim": {"classes": ["cube"]}})")), ValidationError);
}

TEST(Config, GripForceOffGridIsValidationError) {
  TempDir dir("cli_22n");
  auto inv = smoke(dir.path());
  inv.config.grid.mode = "cartesian";
  inv.config.grid.ys = {0.0};
  inv.config.grid.zs = {0.0};
  inv.config.grid.thetas = {0.0};
  inv.config.grid.grip_forces = {22.0};
  EXPECT_THROW(inv.config.validate(), ValidationError);
  std::string err;
  EXPECT_EQ(run_quiet("simulate", inv, &err), 1);
  EXPECT_NE(err.find("multiple of 5"), std::string::npos) << err;
}

TEST(Config, DataRootFromEnvironment) {
  ::setenv(kDataRootEnv, "/tmp/somewhere", 1);
  EXPECT_EQ(default_config().data_root, std::filesystem::path("/tmp/somewhere"));
  ::unsetenv(kDataRootEnv);
  EXPECT_EQ(default_config().data_root, std::filesystem::path("data"));
}

TEST(Config, LoadFromFile) {
  TempDir dir("cli_cfg");
  std::ofstream(dir.path() / "c.json") << R"({"seed": 9, "model": {"height": 64, "width": 48}})";
  const auto c = load_config(dir.path() / "c.json");
  EXPECT_EQ(c.seed, 9u);
  EXPECT_EQ(c.simulator.image_height, 64);
  EXPECT_EQ(c.simulator.image_width, 48);
  std::ofstream(dir.path() / "bad.json") << "{";
  EXPECT_THROW(load_config(dir.path() / "bad.json"), ValidationError);
  EXPECT_THROW(load_config(dir.path() / "missing.json"), IoError);
}

TEST(Simulate, WritesDatasetAndIsDeterministic) {
  TempDir dir("cli_sim");
  auto inv = smoke(dir.path());
  ASSERT_EQ(run_quiet("simulate", inv), 0);
  const auto ds = dir.path() / "ds";
  ASSERT_TRUE(std::filesystem::exists(ds / "manifest"));
  EXPECT_TRUE(std::filesystem::exists(ds / "config.json"));
  EXPECT_EQ(load_manifest(ds).points.size(), 32u);
  const auto first = slurp(ds / "manifest");
  const auto records = slurp(ds / "points.ndrec");

  inv.overrides.out = dir.path() / "again";
  ASSERT_EQ(run_quiet("simulate", inv), 0);
  EXPECT_EQ(slurp(dir.path() / "again" / "manifest"), first);
  EXPECT_EQ(slurp(dir.path() / "again" / "points.ndrec"), records);

  inv.overrides.seed = 4;
  inv.overrides.out = dir.path() / "other";
  ASSERT_EQ(run_quiet("simulate", inv), 0);
  EXPECT_NE(slurp(dir.path() / "other" / "points.ndrec"), records);
}

TEST(Label, RelabelsFromTraces) {
  TempDir dir("cli_label");
  auto inv = smoke(dir.path());
  ASSERT_EQ(run_quiet("simulate", inv), 0);
  const auto before = load_dataset(dir.path() / "ds");
  inv.config.labeling.f_max = 70;
  ASSERT_EQ(run_quiet("label", inv), 0);
  const auto after = load_dataset(dir.path() / "ds");
  EXPECT_EQ(after.manifest.labeling.f_max, 70.0);
  for (std::size_t i = 0; i < after.points.size(); ++i) {
    EXPECT_NEAR(after.points[i].raw_force, before.points[i].raw_force, 1e-9);
    EXPECT_NEAR(after.points[i].label, after.points[i].raw_force / 70.0, 1e-8);
  }
}

TEST(Split, WritesSplitFile) {
  TempDir dir("cli_split");
  auto inv = smoke(dir.path());
  ASSERT_EQ(run_quiet("simulate", inv), 0);
  ASSERT_EQ(run_quiet("split", inv), 0);
  const auto s = load_split(dir.path() / "ds" / "split.json");
  EXPECT_EQ(s.train_ids.size(), 24u);
  EXPECT_EQ(s.validation_ids.size(), 8u);
  EXPECT_EQ(s.n_folds, 3);
}

TEST(Train, MissingDatasetIsError) {
  TempDir dir("cli_missing");
  std::string err;
  EXPECT_EQ(run_quiet("train", smoke(dir.path()), &err), 1);
  EXPECT_NE(err.find("error:"), std::string::npos);
}

TEST(Train, CrossValidationSmokeAndResume) {
  TempDir dir("cli_cv");
  auto inv = smoke(dir.path());
  ASSERT_EQ(run_quiet("simulate", inv), 0);
  ASSERT_EQ(run_quiet("train", inv), 0);
  const auto run = dir.path() / "run";
  for (int k = 0; k < 3; ++k) {
    const auto fold = run / ("fold_" + std::to_string(k));
    EXPECT_TRUE(std::filesystem::exists(fold / "checkpoint"));
    EXPECT_FALSE(read_train_records(fold / "records").empty());
  }
  EXPECT_TRUE(std::filesystem::exists(run / "config.json"));
  EXPECT_TRUE(std::filesystem::exists(run / "done"));
  const auto pooled = report_from_json(slurp(run / "pooled_report.json"));
  EXPECT_EQ(pooled.n, 24u);

  const auto stamp = std::filesystem::last_write_time(run / "fold_0" / "checkpoint");
  inv.overrides.resume = true;
  std::ostringstream out, err;
  EXPECT_EQ(app::run("train", inv, out, err), 0);
  EXPECT_NE(out.str().find("already complete"), std::string::npos);
  EXPECT_EQ(std::filesystem::last_write_time(run / "fold_0" / "checkpoint"), stamp);

  inv.config.evaluation.subset = "folds";
  ASSERT_EQ(run_quiet("evaluate", inv), 0);
  const auto r = report_from_json(slurp(run / "evaluation" / "report.json"));
  EXPECT_EQ(r.n, 24u);
  EXPECT_NEAR(r.a_mean, pooled.a_mean, 1e-12);
}

TEST(Evaluate, SingleRunHeldOutReportAndCorruptCheckpoint) {
  TempDir dir("cli_eval");
  auto inv = smoke(dir.path());
  inv.config.train_mode = "single";
  ASSERT_EQ(run_quiet("simulate", inv), 0);
  ASSERT_EQ(run_quiet("train", inv), 0);
  ASSERT_TRUE(std::filesystem::exists(dir.path() / "run" / "checkpoint"));

  std::ostringstream out, err;
  ASSERT_EQ(app::run("evaluate", inv, out, err), 0) << err.str();
  const auto edir = dir.path() / "run" / "evaluation";
  for (const char* f : {"report.json", "report.txt", "predictions.ndrec", "residuals.svg", "scatter.svg"})
    EXPECT_TRUE(std::filesystem::exists(edir / f)) << f;
  const auto r = report_from_json(slurp(edir / "report.json"));
  EXPECT_EQ(r.n, 8u);
  ASSERT_EQ(r.per_class.size(), 1u);
  EXPECT_EQ(r.per_class.begin()->first, "gear_2");
  EXPECT_NE(out.str().find("gear_2"), std::string::npos);

  inv.config.evaluation.subset = "train";
  inv.overrides.out = dir.path() / "train_eval";
  ASSERT_EQ(run_quiet("evaluate", inv), 0);
  EXPECT_EQ(report_from_json(slurp(dir.path() / "train_eval" / "report.json")).per_class.size(), 3u);

  {
    std::fstream f(dir.path() / "run" / "checkpoint", std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(100);
    f.put('\x7f');
  }
  std::string e;
  EXPECT_EQ(run_quiet("evaluate", inv, &e), 1);
  EXPECT_NE(e.find("corrupt"), std::string::npos) << e;
}

TEST(Report, TabulatesReports) {
  TempDir dir("cli_report");
  const std::vector<double> l{0.1, 0.2, 0.3}, p{0.1, 0.1, 0.35};
  const std::vector<std::string> cls{"gear_2", "gear_2", "pinion_shaft"};
  LabelingConfig lc;
  std::ofstream(dir.path() / "a.json") << report_to_json(evaluate_predictions(l, p, cls, lc));
  std::filesystem::create_directories(dir.path() / "b");
  std::ofstream(dir.path() / "b" / "report.json") << report_to_json(evaluate_predictions(l, l, cls, lc));
  Invocation inv;
  inv.config = default_config();
  inv.report_inputs = {"snn=" + (dir.path() / "a.json").string(), "baseline=" + (dir.path() / "b").string()};
  inv.overrides.out = dir.path() / "table.txt";
  std::ostringstream out, err;
  ASSERT_EQ(app::run("report", inv, out, err), 0) << err.str();
  EXPECT_NE(out.str().find("pinion_shaft"), std::string::npos);
  EXPECT_NE(out.str().find("baseline"), std::string::npos);
  EXPECT_EQ(slurp(dir.path() / "table.txt"), out.str());

  inv.report_inputs.clear();
  EXPECT_EQ(run_quiet("report", inv), 1);
  EXPECT_EQ(run_quiet("dance", inv), 2);
}
