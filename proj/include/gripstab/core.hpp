#pragma once

#include <cstddef>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace gripstab {

// Error hierarchy. Every failure path in the library throws one of these.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class SimulationError : public Error {
 public:
  using Error::Error;
};

class LabelingError : public Error {
 public:
  using Error::Error;
};

// Grip pose restricted to the gripper's free directions plus the jaw force.
// y, z are the translation of the contact centre inside the gel plane (m),
// theta the rotation about the jaw normal (rad).
struct GripConfiguration {
  std::string object_id;
  double y = 0.0;
  double z = 0.0;
  double theta = 0.0;
  double grip_force = 20.0;

  // Empty when valid.
  std::vector<std::string> violations() const;
  void validate() const;
};

inline constexpr double kMinGripForce = 20.0;
inline constexpr double kMaxGripForce = 60.0;
inline constexpr double kGripForceStep = 5.0;

// Step-like commanded pull force: f0 + i * delta_f on [i*delta_t, (i+1)*delta_t).
struct StepForceProfile {
  double f0 = 0.0;
  double delta_f = 1.0;
  double delta_t = 1.0;
  int max_steps = 40;

  void validate() const;
};

struct ForceTrace {
  std::vector<double> timestamps;
  std::vector<double> measured;
  std::vector<double> desired;

  std::size_t size() const { return timestamps.size(); }
  void validate() const;
};

// Interleaved RGB raster, row-major, values in [0,1].
struct Raster {
  int width = 0;
  int height = 0;
  std::vector<float> data;

  Raster() = default;
  Raster(int w, int h) : width(w), height(h), data(static_cast<std::size_t>(w) * h * 3, 0.0f) {}

  float& at(int x, int yrow, int ch) { return data[(static_cast<std::size_t>(yrow) * width + x) * 3 + ch]; }
  float at(int x, int yrow, int ch) const {
    return data[(static_cast<std::size_t>(yrow) * width + x) * 3 + ch];
  }
  bool operator==(const Raster&) const = default;
};

struct TactileImagePair {
  Raster left;
  Raster right;

  std::vector<std::string> violations() const;
};

struct LabelingConfig {
  double f_min = 0.0;
  double f_max = 35.0;
  double epsilon = 3.0;
  double delta_z = 0.002;

  void validate() const;
};

struct DataPoint {
  std::string point_id;
  TactileImagePair images;
  double label = 0.0;
  double raw_force = 0.0;
  bool clamped = false;
  GripConfiguration config;
};

// Lists every invariant violation of a data point; empty means well-formed.
std::vector<std::string> validate_datapoint(const DataPoint& d, const LabelingConfig& cfg);

// Rounds to 9 significant decimal digits, the precision used on disk.
double canonical9(double v);

}  // namespace gripstab
