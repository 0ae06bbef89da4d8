#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "gripstab/core.hpp"
#include "gripstab/pullsim.hpp"
#include "gripstab/training.hpp"

namespace gripstab::app {

inline constexpr const char* kDataRootEnv = "GRIPSTAB_DATA_ROOT";

struct GridConfig {
  std::string mode = "sampled";  // sampled | cartesian
  std::size_t per_class = 100;
  double y_half_range = 0.003;
  double z_half_range = 0.003;
  double theta_half_range = 0.5;
  std::vector<double> ys, zs, thetas, grip_forces;  // cartesian
};

struct DatasetConfig {
  std::string path = "synthetic";
  std::string name = "synthetic";
  std::vector<std::string> held_out_classes{"gear_2", "pinion_shaft"};
  int n_folds = kDefaultFolds;
};

struct ModelConfig {
  std::string kind = "snn";
  int height = 120;
  int width = 160;
};

struct EvaluationConfig {
  std::string checkpoint;  // empty: <run_dir>/checkpoint
  std::string subset = "validation";  // validation | train | all | folds
  std::string out = "evaluation";
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::filesystem::path data_root;

  std::vector<SyntheticObjectClass> classes;
  GridConfig grid;
  StepForceProfile profile;
  SimulatorConfig simulator;

  LabelingConfig labeling;
  DatasetConfig dataset;
  ModelConfig model;

  TrainConfig training;
  std::string train_mode = "cross_validation";  // cross_validation | single
  std::string run_dir = "runs/default";

  EvaluationConfig evaluation;

  std::vector<std::string> violations() const;
  void validate() const;
};

// Defaults, with the data root taken from GRIPSTAB_DATA_ROOT (or ./data).
RunConfig default_config();

// Keys present in j override base; unknown keys are rejected.
RunConfig config_from_json(const nlohmann::json& j, RunConfig base = default_config());
nlohmann::ordered_json config_to_json(const RunConfig& cfg);
RunConfig load_config(const std::filesystem::path& path);

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> out;
  bool resume = false;
};

struct Invocation {
  RunConfig config;
  Overrides overrides;
  std::vector<std::string> report_inputs;  // report: name=path entries
};

std::filesystem::path dataset_dir(const Invocation& inv);
std::filesystem::path run_dir(const Invocation& inv);

void cmd_simulate(const Invocation& inv, std::ostream& out);
void cmd_label(const Invocation& inv, std::ostream& out);
void cmd_split(const Invocation& inv, std::ostream& out);
void cmd_train(const Invocation& inv, std::ostream& out);
void cmd_evaluate(const Invocation& inv, std::ostream& out);
void cmd_report(const Invocation& inv, std::ostream& out);

// Dispatches by name; returns the process exit status and reports errors on err.
int run(const std::string& command, const Invocation& inv, std::ostream& out, std::ostream& err);

}  // namespace gripstab::app
