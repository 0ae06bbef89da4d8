#include "gripstab/core.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>

#include "gripstab/labeling.hpp"

namespace gripstab {

namespace {

std::string join(const std::vector<std::string>& parts) {
  std::string out;
  for (const auto& p : parts) {
    if (!out.empty()) out += "; ";
    out += p;
  }
  return out;
}

}  // namespace

std::vector<std::string> GripConfiguration::violations() const {
  std::vector<std::string> v;
  if (object_id.empty()) v.emplace_back("empty object id");
  if (!std::isfinite(y) || !std::isfinite(z)) v.emplace_back("non-finite grip translation");
  if (!(theta >= -std::numbers::pi && theta < std::numbers::pi)) v.emplace_back("theta outside [-pi, pi)");
  if (!(grip_force >= kMinGripForce && grip_force <= kMaxGripForce)) {
    v.emplace_back("grip force outside [20, 60] N");
  } else {
    const double steps = grip_force / kGripForceStep;
    if (std::abs(steps - std::round(steps)) > 1e-9) v.emplace_back("grip force not a multiple of 5 N");
  }
  return v;
}

void GripConfiguration::validate() const {
  if (auto v = violations(); !v.empty()) {
    throw ValidationError("invalid grip configuration for '" + object_id + "': " + join(v));
  }
}

void StepForceProfile::validate() const {
  if (!(delta_f > 0.0)) throw ValidationError("step profile: delta_f must be > 0");
  if (!(delta_t > 0.0)) throw ValidationError("step profile: delta_t must be > 0");
  if (max_steps < 1) throw ValidationError("step profile: max_steps must be >= 1");
  if (!std::isfinite(f0)) throw ValidationError("step profile: f0 must be finite");
}

void ForceTrace::validate() const {
  if (timestamps.size() < 2) throw ValidationError("force trace needs at least two samples");
  if (measured.size() != timestamps.size() || desired.size() != timestamps.size()) {
    throw ValidationError("force trace channels differ in length");
  }
  for (std::size_t k = 1; k < timestamps.size(); ++k) {
    if (!(timestamps[k] > timestamps[k - 1])) {
      throw ValidationError("force trace timestamps not strictly increasing at sample " + std::to_string(k));
    }
  }
}

std::vector<std::string> TactileImagePair::violations() const {
  std::vector<std::string> v;
  if (left.width <= 0 || left.height <= 0) v.emplace_back("empty left image");
  if (left.width != right.width || left.height != right.height) v.emplace_back("left/right dimensions differ");
  for (const Raster* r : {&left, &right}) {
    if (r->data.size() != static_cast<std::size_t>(r->width) * r->height * 3) {
      v.emplace_back("raster buffer size does not match dimensions");
      break;
    }
    bool bad = false;
    for (float px : r->data) {
      if (!std::isfinite(px) || px < 0.0f || px > 1.0f) {
        bad = true;
        break;
      }
    }
    if (bad) {
      v.emplace_back("pixel value outside [0,1]");
      break;
    }
  }
  return v;
}

void LabelingConfig::validate() const {
  if (!(f_min >= 0.0)) throw ValidationError("labeling: f_min must be >= 0");
  if (!(f_max > f_min)) throw ValidationError("labeling: f_max must exceed f_min");
  if (!(epsilon > 0.0)) throw ValidationError("labeling: epsilon must be > 0");
  if (!(delta_z > 0.0)) throw ValidationError("labeling: delta_z must be > 0");
}

std::vector<std::string> validate_datapoint(const DataPoint& d, const LabelingConfig& cfg) {
  std::vector<std::string> v = d.images.violations();
  for (auto& g : d.config.violations()) v.push_back(std::move(g));

  if (!std::isfinite(d.label) || d.label < 0.0 || d.label > 1.0) {
    v.emplace_back("label out of range");
  } else if (std::isfinite(d.raw_force)) {
    const auto expected = normalize_label(d.raw_force, cfg);
    if (std::abs(expected.label - d.label) > 1e-9) {
      v.emplace_back("label/raw_force mismatch");
    } else if (expected.clamped != d.clamped) {
      v.emplace_back("clamped flag mismatch");
    }
  } else {
    v.emplace_back("non-finite raw force");
  }
  return v;
}

double canonical9(double v) {
  if (!std::isfinite(v)) return v;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return std::strtod(buf, nullptr);
}

}  // namespace gripstab
