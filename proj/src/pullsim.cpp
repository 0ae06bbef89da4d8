#include "gripstab/pullsim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

#include "gripstab/labeling.hpp"
#include "gripstab/rng.hpp"

namespace gripstab {

namespace {

constexpr double kReferenceForce = 60.0;  // N, top of the grip-force grid
constexpr double kReferenceDepthMm = 0.6;
constexpr double kShadeGain = 0.35;
constexpr double kAlbedoGain = 0.25;
constexpr double kLightElevation = std::numbers::pi / 4.0;
constexpr int kAreaSamples = 400;

struct Local {
  double u;
  double v;
};

// Rotates a gel-plane offset into the object's frame.
Local to_local(double dx, double dz, double theta) {
  const double c = std::cos(theta), s = std::sin(theta);
  return {dx * c + dz * s, -dx * s + dz * c};
}

bool inside_nominal(const SyntheticObjectClass& obj, Local p) {
  const auto& sp = obj.shape_params;
  switch (obj.contact_shape) {
    case ContactShape::kDisk:
      return p.u * p.u + p.v * p.v < sp[0] * sp[0];
    case ContactShape::kRing: {
      const double r2 = p.u * p.u + p.v * p.v;
      return r2 < sp[0] * sp[0] && r2 > sp[1] * sp[1];
    }
    case ContactShape::kRectangle:
    case ContactShape::kCylinderLine:
      return std::abs(p.u) < sp[0] / 2 && std::abs(p.v) < sp[1] / 2;
  }
  return false;
}

// Half extents of the nominal footprint's local bounding box.
Local local_extent(const SyntheticObjectClass& obj) {
  const auto& sp = obj.shape_params;
  switch (obj.contact_shape) {
    case ContactShape::kDisk:
    case ContactShape::kRing:
      return {sp[0], sp[0]};
    case ContactShape::kRectangle:
    case ContactShape::kCylinderLine:
      return {sp[0] / 2, sp[1] / 2};
  }
  return {0, 0};
}

// Indentation profile in [0,1]; `scale` shrinks the footprint at lighter grips.
double footprint(const SyntheticObjectClass& obj, Local p, double scale) {
  const auto& sp = obj.shape_params;
  auto dome = [](double q) { return q < 1.0 ? std::sqrt(1.0 - q * q) : 0.0; };
  switch (obj.contact_shape) {
    case ContactShape::kDisk:
      return dome(std::hypot(p.u, p.v) / (sp[0] * scale));
    case ContactShape::kRing: {
      const double centre = 0.5 * (sp[0] + sp[1]);
      const double half = 0.5 * (sp[0] - sp[1]) * scale;
      return dome(std::abs(std::hypot(p.u, p.v) - centre) / half);
    }
    case ContactShape::kRectangle: {
      const double q = std::max(std::abs(p.u) / (sp[0] / 2 * scale), std::abs(p.v) / (sp[1] / 2 * scale));
      return q < 1.0 ? std::sqrt(1.0 - std::pow(q, 6)) : 0.0;
    }
    case ContactShape::kCylinderLine: {
      // Rigid along its axis, Hertzian across it.
      const double along = std::abs(p.u) / (sp[0] / 2);
      const double taper = along < 0.9 ? 1.0 : (along < 1.0 ? (1.0 - along) / 0.1 : 0.0);
      return taper * dome(std::abs(p.v) / (sp[1] / 2 * scale));
    }
  }
  return 0.0;
}

std::string describe(const GripConfiguration& g) {
  char buf[160];
  std::snprintf(buf, sizeof buf, " [class=%s y=%.6g z=%.6g theta=%.6g grip_force=%.6g]", g.object_id.c_str(), g.y,
                g.z, g.theta, g.grip_force);
  return buf;
}

}  // namespace

std::string to_string(ContactShape s) {
  switch (s) {
    case ContactShape::kDisk:
      return "disk";
    case ContactShape::kRing:
      return "ring";
    case ContactShape::kRectangle:
      return "rectangle";
    case ContactShape::kCylinderLine:
      return "cylinder-line";
  }
  return "unknown";
}

ContactShape contact_shape_from_string(const std::string& s) {
  if (s == "disk") return ContactShape::kDisk;
  if (s == "ring") return ContactShape::kRing;
  if (s == "rectangle") return ContactShape::kRectangle;
  if (s == "cylinder-line") return ContactShape::kCylinderLine;
  throw ValidationError("unknown contact shape '" + s + "'");
}

void SimulatorConfig::validate() const {
  if (!(force_noise_std >= 0.0) || !(pixel_noise_std >= 0.0)) {
    throw ValidationError("simulator: noise std values must be >= 0");
  }
  if (!(lag_time >= 0.0)) throw ValidationError("simulator: lag_time must be >= 0");
  if (!std::isfinite(gravity_sag)) throw ValidationError("simulator: gravity_sag must be finite");
  if (!(sample_rate > 0.0)) throw ValidationError("simulator: sample_rate must be > 0");
  if (image_width < 1 || image_height < 1) throw ValidationError("simulator: image size must be positive");
  if (!(gel_width > 0.0) || !(gel_height > 0.0)) throw ValidationError("simulator: gel size must be positive");
}

void validate_object(const SyntheticObjectClass& obj, const SimulatorConfig& sim) {
  const std::string where = "object class '" + obj.class_id + "': ";
  if (obj.class_id.empty()) throw ValidationError("object class with empty id");
  if (!(obj.friction_mu > 0.0 && obj.friction_mu <= 2.0)) throw ValidationError(where + "friction_mu outside (0, 2]");
  const std::size_t expected = obj.contact_shape == ContactShape::kDisk ? 1 : 2;
  if (obj.shape_params.size() != expected) {
    throw ValidationError(where + "expected " + std::to_string(expected) + " shape parameters for " +
                          to_string(obj.contact_shape));
  }
  for (double p : obj.shape_params) {
    if (!(p > 0.0)) throw ValidationError(where + "shape dimensions must be positive");
  }
  const double max_dim = std::max(sim.gel_width, sim.gel_height);
  const double min_dim = std::min(sim.gel_width, sim.gel_height);
  const auto& sp = obj.shape_params;
  switch (obj.contact_shape) {
    case ContactShape::kDisk:
      if (2 * sp[0] > min_dim) throw ValidationError(where + "disk does not fit in the gel window");
      break;
    case ContactShape::kRing:
      if (sp[1] >= sp[0]) throw ValidationError(where + "ring inner radius must be below outer radius");
      if (2 * sp[0] > min_dim) throw ValidationError(where + "ring does not fit in the gel window");
      break;
    case ContactShape::kRectangle:
    case ContactShape::kCylinderLine:
      if (std::max(sp[0], sp[1]) > max_dim || std::min(sp[0], sp[1]) > min_dim) {
        throw ValidationError(where + "footprint does not fit in the gel window");
      }
      break;
  }
}

double area_factor(const SyntheticObjectClass& obj, const GripConfiguration& grip, const SimulatorConfig& sim) {
  validate_object(obj, sim);
  const Local ext = local_extent(obj);
  const double hw = sim.gel_width / 2, hh = sim.gel_height / 2;
  std::size_t in_shape = 0, in_both = 0;
  for (int i = 0; i < kAreaSamples; ++i) {
    const double u = -ext.u + (i + 0.5) * (2 * ext.u / kAreaSamples);
    for (int j = 0; j < kAreaSamples; ++j) {
      const double v = -ext.v + (j + 0.5) * (2 * ext.v / kAreaSamples);
      if (!inside_nominal(obj, {u, v})) continue;
      ++in_shape;
      const double c = std::cos(grip.theta), s = std::sin(grip.theta);
      const double x = grip.y + u * c - v * s;
      const double zc = grip.z + u * s + v * c;
      if (std::abs(x) <= hw && std::abs(zc) <= hh) ++in_both;
    }
  }
  return in_shape == 0 ? 0.0 : static_cast<double>(in_both) / static_cast<double>(in_shape);
}

double coulomb_slip_force(double friction_mu, double grip_force, double area) {
  return 2.0 * friction_mu * grip_force * area;
}

double ground_truth_slip_force(const SyntheticObjectClass& obj, const GripConfiguration& grip,
                               const SimulatorConfig& sim) {
  if (!(grip.grip_force >= 0.0) || !std::isfinite(grip.grip_force)) {
    throw ValidationError("grip force must be a finite non-negative value" + describe(grip));
  }
  const double a = area_factor(obj, grip, sim);
  if (a <= 0.0) throw SimulationError("no contact: footprint lies outside the gel window" + describe(grip));
  return coulomb_slip_force(obj.friction_mu, grip.grip_force, a);
}

DesiredProfile generate_desired_profile(const StepForceProfile& p, double sample_rate) {
  p.validate();
  if (!(sample_rate > 0.0)) throw ValidationError("sample_rate must be > 0");
  const double samples_per_step = sample_rate * p.delta_t;
  const auto n = static_cast<std::size_t>(std::ceil(p.max_steps * samples_per_step - 1e-9));
  DesiredProfile out;
  out.timestamps.reserve(n);
  out.desired.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double step = std::floor(static_cast<double>(k) / samples_per_step + 1e-9);
    out.timestamps.push_back(static_cast<double>(k) / sample_rate);
    out.desired.push_back(p.f0 + step * p.delta_f);
  }
  return out;
}

PullResult simulate_pull(const SyntheticObjectClass& obj, const GripConfiguration& grip,
                         const StepForceProfile& profile, const SimulatorConfig& sim) {
  sim.validate();
  const double slip = ground_truth_slip_force(obj, grip, sim);
  const DesiredProfile des = generate_desired_profile(profile, sim.sample_rate);

  std::size_t plateau = des.desired.size();
  for (std::size_t k = 0; k < des.desired.size(); ++k) {
    if (des.desired[k] > slip) {
      plateau = k;
      break;
    }
  }
  if (plateau == des.desired.size()) {
    throw SimulationError("no slip within profile: commanded force never exceeds the slip force of " +
                          std::to_string(slip) + " N; extend max_steps" + describe(grip));
  }

  // Displacement termination: the run stops one dwell period after sliding starts.
  const double t_end = des.timestamps[plateau] + profile.delta_t;
  std::size_t n = plateau;
  while (n < des.timestamps.size() && des.timestamps[n] < t_end - 1e-12) ++n;
  n = std::max<std::size_t>(n, std::min<std::size_t>(2, des.timestamps.size()));
  if (n < 2) throw SimulationError("trace shorter than two samples; raise sample_rate" + describe(grip));

  Rng rng(derive_seed(sim.rng_seed, {tag(Stream::kForceNoise)}));
  std::normal_distribution<double> noise(0.0, 1.0);
  const double dt = 1.0 / sim.sample_rate;
  const double alpha = sim.lag_time > 0.0 ? 1.0 - std::exp(-dt / sim.lag_time) : 1.0;

  PullResult out;
  out.ground_truth = slip;
  out.trace.timestamps.assign(des.timestamps.begin(), des.timestamps.begin() + static_cast<std::ptrdiff_t>(n));
  out.trace.desired.assign(des.desired.begin(), des.desired.begin() + static_cast<std::ptrdiff_t>(n));
  out.trace.measured.resize(n);
  double tracked = std::min(des.desired[0], slip);
  for (std::size_t k = 0; k < n; ++k) {
    const double target = std::min(des.desired[k], slip);
    tracked += alpha * (target - tracked);
    const double eps = sim.force_noise_std > 0.0 ? sim.force_noise_std * noise(rng) : 0.0;
    out.trace.measured[k] = tracked + sim.gravity_sag + eps;
  }
  return out;
}

TactileImagePair render_tactile_pair(const SyntheticObjectClass& obj, const GripConfiguration& grip,
                                     const SimulatorConfig& sim) {
  sim.validate();
  validate_object(obj, sim);
  const int W = sim.image_width, H = sim.image_height;
  const double px_w = sim.gel_width / W, px_h = sim.gel_height / H;

  const double force_ratio = std::max(grip.grip_force, 0.0) / kReferenceForce;
  const double scale = std::cbrt(force_ratio);
  const double depth = kReferenceDepthMm * std::pow(force_ratio, 2.0 / 3.0);

  // Object surface texture: machining grooves whose relief grows with roughness.
  Rng tex_rng(derive_seed(obj.texture_seed, {tag(Stream::kTexture)}));
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double groove_period = 0.0008 + 0.0008 * unif(tex_rng);
  const double groove_phase = 2 * std::numbers::pi * unif(tex_rng);
  const double groove_amp = 0.8 * obj.friction_mu;
  double bg_kx[3], bg_kz[3], bg_ph[3];
  for (int j = 0; j < 3; ++j) {
    bg_kx[j] = (0.5 + 2.0 * unif(tex_rng)) * 2 * std::numbers::pi / sim.gel_width;
    bg_kz[j] = (0.5 + 2.0 * unif(tex_rng)) * 2 * std::numbers::pi / sim.gel_height;
    bg_ph[j] = 2 * std::numbers::pi * unif(tex_rng);
  }

  std::vector<double> height(static_cast<std::size_t>(W) * H, 0.0);
  for (int r = 0; r < H; ++r) {
    const double zc = sim.gel_height / 2 - (r + 0.5) * px_h;
    for (int c = 0; c < W; ++c) {
      const double x = -sim.gel_width / 2 + (c + 0.5) * px_w;
      const Local p = to_local(x - grip.y, zc - grip.z, grip.theta);
      const double f = footprint(obj, p, scale);
      if (f <= 0.0) continue;
      const double groove = groove_amp * std::sin(2 * std::numbers::pi * p.v / groove_period + groove_phase);
      height[static_cast<std::size_t>(r) * W + c] = depth * f * (1.0 + groove);
    }
  }

  const double ce = std::cos(kLightElevation), se = std::sin(kLightElevation);
  const double lights[3][3] = {{0.0, ce, se}, {0.0, -ce, se}, {0.0, 0.0, 1.0}};
  const double px_w_mm = px_w * 1000.0, px_h_mm = px_h * 1000.0;
  auto h_at = [&](int c, int r) {
    c = std::clamp(c, 0, W - 1);
    r = std::clamp(r, 0, H - 1);
    return height[static_cast<std::size_t>(r) * W + c];
  };

  Raster canvas(W, H);
  for (int r = 0; r < H; ++r) {
    const double zc = sim.gel_height / 2 - (r + 0.5) * px_h;
    for (int c = 0; c < W; ++c) {
      const double x = -sim.gel_width / 2 + (c + 0.5) * px_w;
      const double hx = (h_at(c + 1, r) - h_at(c - 1, r)) / (2 * px_w_mm);
      const double hz = (h_at(c, r - 1) - h_at(c, r + 1)) / (2 * px_h_mm);
      const double norm = std::sqrt(hx * hx + hz * hz + 1.0);
      const double n[3] = {-hx / norm, -hz / norm, 1.0 / norm};
      double bg = 0.0;
      for (int j = 0; j < 3; ++j) bg += std::sin(bg_kx[j] * x + bg_kz[j] * zc + bg_ph[j]);
      bg *= 0.004 / 3.0;
      const double albedo = kAlbedoGain * h_at(c, r) / kReferenceDepthMm;
      for (int ch = 0; ch < 3; ++ch) {
        const double lambert = n[0] * lights[ch][0] + n[1] * lights[ch][1] + n[2] * lights[ch][2];
        canvas.at(c, r, ch) =
            static_cast<float>(kGelBase[ch] + kShadeGain * (lambert - lights[ch][2]) + albedo + bg);
      }
    }
  }

  auto finish = [&](bool mirrored, Stream stream) {
    Rng rng(derive_seed(sim.rng_seed, {tag(stream)}));
    std::normal_distribution<double> noise(0.0, 1.0);
    Raster out(W, H);
    for (int r = 0; r < H; ++r) {
      for (int c = 0; c < W; ++c) {
        const int src = mirrored ? W - 1 - c : c;
        for (int ch = 0; ch < 3; ++ch) {
          double v = canvas.at(src, r, ch);
          if (sim.pixel_noise_std > 0.0) v += sim.pixel_noise_std * noise(rng);
          v = std::clamp(v, 0.0, 1.0);
          out.at(c, r, ch) = static_cast<float>(std::lround(v * 255.0)) / 255.0f;
        }
      }
    }
    return out;
  };

  return TactileImagePair{finish(false, Stream::kPixelNoiseLeft), finish(true, Stream::kPixelNoiseRight)};
}

std::size_t contact_pixel_count(const Raster& image, double threshold) {
  std::size_t count = 0;
  for (int r = 0; r < image.height; ++r) {
    for (int c = 0; c < image.width; ++c) {
      double dev = 0.0;
      for (int ch = 0; ch < 3; ++ch) dev = std::max(dev, std::abs(double(image.at(c, r, ch)) - kGelBase[ch]));
      if (dev > threshold) ++count;
    }
  }
  return count;
}

GripGrid GripGrid::cartesian(std::span<const double> ys, std::span<const double> zs, std::span<const double> thetas,
                             std::span<const double> forces) {
  GripGrid g;
  for (double f : forces)
    for (double t : thetas)
      for (double z : zs)
        for (double y : ys) g.cells.push_back({y, z, t, f});
  return g;
}

GripGrid GripGrid::sampled(std::size_t n, double y_half_range, double z_half_range, double theta_half_range,
                           std::uint64_t seed) {
  Rng rng(derive_seed(seed, {tag(Stream::kGrid)}));
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  std::uniform_int_distribution<int> force_step(0, 8);
  GripGrid g;
  g.cells.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    GridCell c;
    c.y = y_half_range * unif(rng);
    c.z = z_half_range * unif(rng);
    c.theta = theta_half_range * unif(rng);
    c.grip_force = kMinGripForce + kGripForceStep * force_step(rng);
    g.cells.push_back(c);
  }
  return g;
}

GeneratedDataset generate_dataset(std::span<const SyntheticObjectClass> classes, const GripGrid& grid,
                                  const StepForceProfile& profile, const SimulatorConfig& sim,
                                  const LabelingConfig& labeling) {
  if (classes.empty()) throw ValidationError("generate_dataset: no object classes");
  if (grid.cells.empty()) throw ValidationError("generate_dataset: empty grip grid");
  sim.validate();
  profile.validate();
  labeling.validate();
  for (const auto& c : classes) validate_object(c, sim);

  GeneratedDataset out;
  const std::size_t total = classes.size() * grid.cells.size();
  out.points.reserve(total);
  out.traces.reserve(total);
  out.ground_truth.reserve(total);

  for (std::size_t ci = 0; ci < classes.size(); ++ci) {
    const auto& obj = classes[ci];
    for (std::size_t j = 0; j < grid.cells.size(); ++j) {
      const std::size_t index = ci * grid.cells.size() + j;
      const GridCell& cell = grid.cells[j];
      GripConfiguration grip{obj.class_id, canonical9(cell.y), canonical9(cell.z), canonical9(cell.theta),
                             cell.grip_force};
      grip.validate();

      SimulatorConfig point_sim = sim;
      point_sim.rng_seed = derive_seed(sim.rng_seed, {index});

      PullResult pull;
      TraceLabel lab;
      try {
        pull = simulate_pull(obj, grip, profile, point_sim);
        lab = label_trace(pull.trace, labeling);
      } catch (const Error& e) {
        throw SimulationError(std::string(e.what()) + " (point " + std::to_string(index) + describe(grip) + ")");
      }

      DataPoint d;
      char id[64];
      std::snprintf(id, sizeof id, "%s_%05zu", obj.class_id.c_str(), j);
      d.point_id = id;
      d.config = grip;
      d.raw_force = lab.raw_force;
      d.label = lab.label;
      d.clamped = lab.clamped;
      d.images = render_tactile_pair(obj, grip, point_sim);
      out.points.push_back(std::move(d));
      out.traces.push_back(std::move(pull.trace));
      out.ground_truth.push_back(pull.ground_truth);
    }
  }
  return out;
}

std::vector<SyntheticObjectClass> default_object_classes() {
  return {
      {"gear", 0.28, ContactShape::kRing, {0.0065, 0.0040}, 11},
      {"ball_bearing", 0.26, ContactShape::kRing, {0.0050, 0.0035}, 23},
      {"axle_long", 0.27, ContactShape::kCylinderLine, {0.020, 0.003}, 37},
      {"gear_1", 0.29, ContactShape::kRectangle, {0.009, 0.006}, 41},
      {"gear_2", 0.27, ContactShape::kRing, {0.0075, 0.0055}, 53},
      {"pinion_shaft", 0.28, ContactShape::kCylinderLine, {0.016, 0.004}, 67},
  };
}

}  // namespace gripstab
