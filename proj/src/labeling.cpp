#include "gripstab/labeling.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace gripstab {

SlipResult detect_slip(const ForceTrace& trace, double epsilon) {
  trace.validate();
  if (!(epsilon > 0.0)) throw ValidationError("detect_slip: epsilon must be > 0");

  for (std::size_t k = trace.size(); k-- > 0;) {
    if (std::abs(trace.measured[k] - trace.desired[k]) < epsilon) {
      return SlipResult{trace.timestamps[k], trace.measured[k], k};
    }
  }
  throw LabelingError("never tracked: no sample within epsilon = " + std::to_string(epsilon) +
                      " N of the commanded force");
}

NormalizedLabel normalize_label(double f_max, const LabelingConfig& cfg) {
  cfg.validate();
  const double l = (f_max - cfg.f_min) / (cfg.f_max - cfg.f_min);
  if (l < 0.0) return {0.0, true};
  if (l > 1.0) return {1.0, true};
  return {l, false};
}

double denormalize_label(double label, const LabelingConfig& cfg) {
  cfg.validate();
  if (!(label >= 0.0 && label <= 1.0)) {
    throw ValidationError("denormalize_label: label " + std::to_string(label) + " outside [0,1]");
  }
  return cfg.f_min + label * (cfg.f_max - cfg.f_min);
}

std::vector<double> moving_average(std::span<const double> values, std::size_t window) {
  std::vector<double> out(values.begin(), values.end());
  if (window <= 1) return out;
  double acc = 0.0;
  for (std::size_t k = 0; k < values.size(); ++k) {
    acc += values[k];
    if (k >= window) acc -= values[k - window];
    out[k] = acc / static_cast<double>(std::min(k + 1, window));
  }
  return out;
}

TraceLabel label_trace(const ForceTrace& trace, const LabelingConfig& cfg, const LabelOptions& opts) {
  SlipResult slip;
  if (opts.prefilter_window > 1) {
    ForceTrace filtered = trace;
    filtered.measured = moving_average(trace.measured, opts.prefilter_window);
    slip = detect_slip(filtered, cfg.epsilon);
  } else {
    slip = detect_slip(trace, cfg.epsilon);
  }
  TraceLabel out;
  out.slip = slip;
  out.raw_force = canonical9(slip.f_max);
  const auto n = normalize_label(out.raw_force, cfg);
  out.label = canonical9(n.label);
  out.clamped = n.clamped;
  return out;
}

}  // namespace gripstab
