#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "gripstab/batch.hpp"
#include "gripstab/checkpoint.hpp"
#include "gripstab/datasets.hpp"
#include "gripstab/evaluation.hpp"
#include "gripstab/models.hpp"

namespace gripstab {

struct TrainConfig {
  double learning_rate = 0.1;  // eta
  double momentum = 0.9;       // rho
  double sam_radius = 0.05;    // beta
  int batch_size = 16;
  int max_epochs = 100;
  std::uint64_t max_steps = 0;  // 0: bounded by max_epochs only
  std::uint64_t seed = 0;
  int eval_every = 10;
  int patience = 10;  // evaluations without improvement; 0 disables early stopping
  // When > 0, stop once the evaluation-mode MSE on the training set drops below it.
  double target_train_mse = 0.0;

  std::vector<std::string> violations() const;
  void validate() const;
};

struct TrainRecord {
  std::uint64_t step = 0;
  int epoch = 0;
  double train_loss = 0.0;  // mean first-pass batch loss since the previous record
  double val_loss = 0.0;    // evaluation-mode MSE on the validation set (training set if none)
  double train_eval_loss = std::nan("");  // evaluation-mode MSE on the training set, when measured
  double wall_time = 0.0;

  bool same_values(const TrainRecord& o) const;  // everything but wall_time
};

std::string format_train_record(const TrainRecord& r);
TrainRecord parse_train_record(const std::string& line);
std::vector<TrainRecord> read_train_records(const std::filesystem::path& path);

class TrainingError : public Error {
 public:
  using Error::Error;
};

// Loss became non-finite; carries the records emitted before the failure.
class DivergenceError : public TrainingError {
 public:
  DivergenceError(const std::string& what, std::vector<TrainRecord> partial)
      : TrainingError(what), records_(std::move(partial)) {}
  const std::vector<TrainRecord>& records() const { return records_; }

 private:
  std::vector<TrainRecord> records_;
};

double mse_loss(std::span<const double> predictions, std::span<const double> labels);

// eps = beta * g / ||g||, or zero when ||g|| == 0. Returns ||eps||.
template <typename T>
double sam_perturbation(std::span<const T> g, double beta, std::span<T> eps) {
  double ss = 0.0;
  for (T v : g) ss += static_cast<double>(v) * static_cast<double>(v);
  const double norm = std::sqrt(ss);
  if (norm == 0.0) {
    std::fill(eps.begin(), eps.end(), T(0));
    return 0.0;
  }
  const double scale = beta / norm;
  double out = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    eps[i] = static_cast<T>(scale * static_cast<double>(g[i]));
    out += static_cast<double>(eps[i]) * static_cast<double>(eps[i]);
  }
  return std::sqrt(out);
}

struct SamStepInfo {
  double loss = 0.0;  // loss at the unperturbed point
  double gradient_norm = 0.0;
  double perturbation_norm = 0.0;
};

// One SAM update with momentum SGD as the base optimiser:
//   g1 = grad L(w); eps = beta g1/||g1||; g2 = grad L(w + eps);
//   v <- rho v + g2; w <- w - eta v.
// gradient_fn(params, grad) evaluates at the current contents of params,
// writes the gradient into grad and returns the loss.
template <typename T, typename GradientFn>
SamStepInfo sam_step(std::span<T> params, GradientFn&& gradient_fn, const TrainConfig& cfg, std::vector<T>& velocity) {
  const std::size_t n = params.size();
  if (velocity.size() != n) velocity.assign(n, T(0));
  std::vector<T> g(n), w0(params.begin(), params.end());
  auto check = [&](double loss, const char* pass) {
    if (!std::isfinite(loss)) throw TrainingError(std::string("non-finite loss in ") + pass + " pass");
    for (std::size_t i = 0; i < n; ++i) {
      if (!std::isfinite(static_cast<double>(g[i]))) {
        throw TrainingError(std::string("non-finite gradient in ") + pass + " pass at parameter " +
                            std::to_string(i) + " (loss " + std::to_string(loss) + ")");
      }
    }
  };

  SamStepInfo info;
  info.loss = gradient_fn(std::span<const T>(params), std::span<T>(g));
  check(info.loss, "first");
  std::vector<T> eps(n);
  info.perturbation_norm = sam_perturbation<T>(g, cfg.sam_radius, eps);
  double ss = 0.0;
  for (T v : g) ss += static_cast<double>(v) * static_cast<double>(v);
  info.gradient_norm = std::sqrt(ss);

  if (info.perturbation_norm > 0.0) {
    for (std::size_t i = 0; i < n; ++i) params[i] = w0[i] + eps[i];
    const double loss2 = gradient_fn(std::span<const T>(params), std::span<T>(g));
    check(loss2, "perturbed");
  }
  const T rho = static_cast<T>(cfg.momentum);
  const T eta = static_cast<T>(cfg.learning_rate);
  for (std::size_t i = 0; i < n; ++i) {
    velocity[i] = rho * velocity[i] + g[i];
    params[i] = w0[i] - eta * velocity[i];
  }
  return info;
}

struct TrainOptions {
  std::function<void(const TrainRecord&)> on_record;
  // Returning true ends training after this record (for example a wall-clock budget).
  std::function<bool(const TrainRecord&)> stop_after;
};

struct TrainResult {
  Checkpoint best;  // lowest val_loss seen at a record
  Checkpoint last;
  std::vector<TrainRecord> records;
  std::uint64_t steps = 0;
  bool early_stopped = false;
  bool reached_target = false;
  bool interrupted = false;  // stop_after asked to end training
};

TrainResult train_single(const ModelSpec& model, const TensorDataset& train, const TensorDataset& val,
                         const TrainConfig& cfg, const TrainOptions& opts = {});

struct FoldResult {
  int fold = 0;
  Checkpoint checkpoint;
  EvaluationReport report;
  std::vector<std::size_t> indices;  // dataset indices validated in this fold
  std::vector<std::string> point_ids;
  std::vector<double> predictions;
  std::vector<TrainRecord> records;
};

struct CrossValidationResult {
  std::vector<FoldResult> folds;
  EvaluationReport pooled;
  std::vector<std::string> pooled_ids;
  std::vector<double> pooled_labels;
  std::vector<double> pooled_predictions;
};

struct CrossValidationOptions {
  LabelingConfig labeling;
  // When set, each fold writes <run_dir>/fold_<k>/{checkpoint, records, report.json, predictions.ndrec}.
  std::filesystem::path run_dir;
  // Reuse folds whose outputs are already complete in run_dir.
  bool resume = false;
};

// Fold k trains on every other fold and is evaluated on fold k. Each fold
// trains with seed derive_seed(cfg.seed, {folds, k}).
CrossValidationResult cross_validate(const std::function<ModelSpec()>& model_builder, const TensorDataset& data,
                                     const FoldAssignment& folds, const TrainConfig& cfg,
                                     const CrossValidationOptions& opts = {});

}  // namespace gripstab
