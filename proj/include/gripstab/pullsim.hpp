#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gripstab/core.hpp"

namespace gripstab {

enum class ContactShape { kDisk, kRing, kRectangle, kCylinderLine };

std::string to_string(ContactShape s);
ContactShape contact_shape_from_string(const std::string& s);

// Stand-in for one physical part. shape_params (metres):
//   disk: {radius}; ring: {outer_radius, inner_radius};
//   rectangle: {width, height}; cylinder-line: {length, width}.
struct SyntheticObjectClass {
  std::string class_id;
  double friction_mu = 0.3;
  ContactShape contact_shape = ContactShape::kDisk;
  std::vector<double> shape_params;
  std::uint64_t texture_seed = 0;
};

struct SimulatorConfig {
  double force_noise_std = 1.3;
  double lag_time = 0.1;
  double pixel_noise_std = 0.01;
  double gravity_sag = 0.0;
  std::uint64_t rng_seed = 0;

  double sample_rate = 10.0;
  int image_width = 640;
  int image_height = 480;
  double gel_width = 0.024;
  double gel_height = 0.018;

  void validate() const;
};

void validate_object(const SyntheticObjectClass& obj, const SimulatorConfig& sim);

// Fraction of the nominal contact footprint that lies inside the gel window.
double area_factor(const SyntheticObjectClass& obj, const GripConfiguration& grip, const SimulatorConfig& sim);

// Two-finger Coulomb model: 2 * mu * F_G * area_factor.
double coulomb_slip_force(double friction_mu, double grip_force, double area_factor);

// Throws SimulationError("no contact") when the footprint misses the gel window.
double ground_truth_slip_force(const SyntheticObjectClass& obj, const GripConfiguration& grip,
                               const SimulatorConfig& sim);

struct DesiredProfile {
  std::vector<double> timestamps;
  std::vector<double> desired;
};

DesiredProfile generate_desired_profile(const StepForceProfile& p, double sample_rate);

struct PullResult {
  ForceTrace trace;
  double ground_truth = 0.0;
};

PullResult simulate_pull(const SyntheticObjectClass& obj, const GripConfiguration& grip,
                         const StepForceProfile& profile, const SimulatorConfig& sim);

TactileImagePair render_tactile_pair(const SyntheticObjectClass& obj, const GripConfiguration& grip,
                                     const SimulatorConfig& sim);

// Colour of an undeformed, untextured gel pixel.
inline constexpr float kGelBase[3] = {0.45f, 0.42f, 0.50f};

// Pixels whose largest channel deviation from the flat-gel colour exceeds threshold.
std::size_t contact_pixel_count(const Raster& image, double threshold = 0.05);

struct GridCell {
  double y = 0.0;
  double z = 0.0;
  double theta = 0.0;
  double grip_force = 20.0;
};

struct GripGrid {
  std::vector<GridCell> cells;

  static GripGrid cartesian(std::span<const double> ys, std::span<const double> zs,
                            std::span<const double> thetas, std::span<const double> forces);
  // n cells, y/z/theta uniform in [lo, hi), force drawn from the 5 N grid in [20, 60].
  static GripGrid sampled(std::size_t n, double y_half_range, double z_half_range, double theta_half_range,
                          std::uint64_t seed);
};

struct GeneratedDataset {
  std::vector<DataPoint> points;
  std::vector<ForceTrace> traces;
  std::vector<double> ground_truth;
};

// One data point per (class, cell), in class-major order. Point ids are
// "<class_id>_<cell index>"; all randomness derives from (sim.rng_seed, point index).
GeneratedDataset generate_dataset(std::span<const SyntheticObjectClass> classes, const GripGrid& grid,
                                  const StepForceProfile& profile, const SimulatorConfig& sim,
                                  const LabelingConfig& labeling);

// Six gearbox-like stand-ins; the first three are the usual training classes.
std::vector<SyntheticObjectClass> default_object_classes();

}  // namespace gripstab
