#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gripstab/batch.hpp"
#include "gripstab/checkpoint.hpp"
#include "gripstab/core.hpp"

namespace gripstab {

// Mean signed residual l - p.
double accuracy_mean(std::span<const double> labels, std::span<const double> predictions);
// Bessel-corrected standard deviation of the residuals l - p; needs n >= 2.
double precision_rmse(std::span<const double> labels, std::span<const double> predictions);

struct ForceUnits {
  double f_accuracy = 0.0;
  double f_precision = 0.0;
};

// Scales both by (f_max - f_min).
ForceUnits to_force_units(double a_mean, double p_rmse, const LabelingConfig& cfg);

struct GaussianFit {
  double mu = 0.0;
  double sigma = 0.0;
};

GaussianFit fit_residual_gaussian(std::span<const double> residuals);

std::vector<double> residuals(std::span<const double> labels, std::span<const double> predictions);

struct ClassMetrics {
  std::size_t n = 0;
  double a_mean = 0.0;
  double p_rmse = 0.0;
  double f_accuracy = 0.0;
  double f_precision = 0.0;
};

struct EvaluationReport {
  std::size_t n = 0;
  double a_mean = 0.0;
  double p_rmse = 0.0;
  double f_accuracy = 0.0;
  double f_precision = 0.0;
  std::map<std::string, ClassMetrics> per_class;
  GaussianFit gaussian_fit;
};

// A single residual has no spread: p_rmse and sigma are reported as 0.
EvaluationReport evaluate_predictions(std::span<const double> labels, std::span<const double> predictions,
                                      std::span<const std::string> classes, const LabelingConfig& cfg);

struct Evaluation {
  EvaluationReport report;
  std::vector<double> labels;
  std::vector<double> predictions;
  std::vector<std::string> ids;
  std::vector<std::string> classes;
};

// Evaluation-mode forward pass over every point.
Evaluation evaluate_model(const Checkpoint& ckpt, const TensorDataset& data, const LabelingConfig& cfg);
Evaluation evaluate_network(Network<float>& net, const TensorDataset& data, const LabelingConfig& cfg);

struct Histogram {
  double lo = 0.0;
  double hi = 0.0;
  std::vector<std::size_t> counts;

  double bin_width() const { return counts.empty() ? 0.0 : (hi - lo) / static_cast<double>(counts.size()); }
};

Histogram residual_histogram(std::span<const double> residuals, int bins = 30);

struct PlotFiles {
  std::filesystem::path histogram;
  std::filesystem::path scatter;
};

// residuals.svg (histogram with Gaussian overlay) and scatter.svg (label vs
// prediction with the identity line) under dir.
PlotFiles emit_plots(const EvaluationReport& report, std::span<const double> residuals,
                     std::span<const double> predictions, std::span<const double> labels,
                     const std::filesystem::path& dir);

std::string report_to_json(const EvaluationReport& report);
EvaluationReport report_from_json(const std::string& text);

// Grid of "F_A ± F_P" in newtons: one row per model, one column per class,
// plus an overall column.
std::string format_report_table(const std::vector<std::pair<std::string, EvaluationReport>>& rows);

}  // namespace gripstab
