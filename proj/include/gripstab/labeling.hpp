#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "gripstab/core.hpp"

namespace gripstab {

struct SlipResult {
  double t_slip = 0.0;
  double f_max = 0.0;
  std::size_t index = 0;
};

// T_slip is the latest sample whose measured force still tracks the commanded
// force within epsilon; F_max is the measured force at that sample.
// Throws LabelingError when no sample tracks ("never tracked").
SlipResult detect_slip(const ForceTrace& trace, double epsilon);

struct NormalizedLabel {
  double label = 0.0;
  bool clamped = false;
};

NormalizedLabel normalize_label(double f_max, const LabelingConfig& cfg);

// Inverse of normalize_label on [0,1]; throws ValidationError outside it.
double denormalize_label(double label, const LabelingConfig& cfg);

// Trailing moving average. window == 1 returns the input unchanged.
std::vector<double> moving_average(std::span<const double> values, std::size_t window);

struct LabelOptions {
  // 0 or 1 disables the pre-filter on the measured channel.
  std::size_t prefilter_window = 0;
};

struct TraceLabel {
  SlipResult slip;
  double raw_force = 0.0;
  double label = 0.0;
  bool clamped = false;
};

// detect_slip + normalize_label, with forces canonicalised to the on-disk precision.
TraceLabel label_trace(const ForceTrace& trace, const LabelingConfig& cfg, const LabelOptions& opts = {});

}  // namespace gripstab
