#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "gripstab/core.hpp"
#include "gripstab/labeling.hpp"

using namespace gripstab;

namespace {

DataPoint make_point(double raw_force, double label) {
  DataPoint d;
  d.point_id = "p0";
  d.images.left = Raster(4, 3);
  d.images.right = Raster(4, 3);
  d.raw_force = raw_force;
  d.label = label;
  d.config = GripConfiguration{"gear", 0.0, 0.0, 0.0, 30.0};
  return d;
}

}  // namespace

TEST(GripConfiguration, AcceptsGridForces) {
  for (double f = 20; f <= 60; f += 5) EXPECT_TRUE((GripConfiguration{"g", 0, 0, 0, f}.violations().empty())) << f;
}

TEST(GripConfiguration, RejectsOffGridForce) {
  GripConfiguration g{"g", 0, 0, 0, 17.0};
  EXPECT_FALSE(g.violations().empty());
  EXPECT_THROW(g.validate(), ValidationError);
  g.grip_force = 65;
  EXPECT_THROW(g.validate(), ValidationError);
  g.grip_force = 22.5;
  EXPECT_THROW(g.validate(), ValidationError);
}

TEST(GripConfiguration, ThetaHalfOpenRange) {
  EXPECT_TRUE((GripConfiguration{"g", 0, 0, -std::numbers::pi, 20}.violations().empty()));
  EXPECT_FALSE((GripConfiguration{"g", 0, 0, std::numbers::pi, 20}.violations().empty()));
}

TEST(StepForceProfile, Validation) {
  EXPECT_NO_THROW(StepForceProfile{}.validate());
  EXPECT_THROW((StepForceProfile{0, 0, 1, 3}.validate()), ValidationError);
  EXPECT_THROW((StepForceProfile{0, 1, 0, 3}.validate()), ValidationError);
  EXPECT_THROW((StepForceProfile{0, 1, 1, 0}.validate()), ValidationError);
}

TEST(ForceTrace, Validation) {
  ForceTrace t{{0, 1}, {0, 0}, {0, 0}};
  EXPECT_NO_THROW(t.validate());
  t.timestamps = {0, 0};
  EXPECT_THROW(t.validate(), ValidationError);
  t = ForceTrace{{0}, {0}, {0}};
  EXPECT_THROW(t.validate(), ValidationError);
  t = ForceTrace{{0, 1}, {0}, {0, 0}};
  EXPECT_THROW(t.validate(), ValidationError);
}

TEST(LabelingConfig, Validation) {
  EXPECT_NO_THROW(LabelingConfig{}.validate());
  EXPECT_THROW((LabelingConfig{10, 5, 3, 0.002}.validate()), ValidationError);
  EXPECT_THROW((LabelingConfig{0, 35, 0, 0.002}.validate()), ValidationError);
  EXPECT_THROW((LabelingConfig{0, 35, 3, 0}.validate()), ValidationError);
}

TEST(ValidateDatapoint, WellFormedPointHasNoViolations) {
  EXPECT_TRUE(validate_datapoint(make_point(17.5, 0.5), LabelingConfig{}).empty());
}

TEST(ValidateDatapoint, LabelOutOfRange) {
  const auto v = validate_datapoint(make_point(17.5, 1.2), LabelingConfig{});
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0], "label out of range");
}

TEST(ValidateDatapoint, LabelRawForceMismatch) {
  const auto v = validate_datapoint(make_point(17.5, 0.9), LabelingConfig{});
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0], "label/raw_force mismatch");
}

TEST(ValidateDatapoint, ClampedFlagMustMatch) {
  auto d = make_point(40.0, 1.0);
  EXPECT_EQ(validate_datapoint(d, LabelingConfig{}).size(), 1u);
  d.clamped = true;
  EXPECT_TRUE(validate_datapoint(d, LabelingConfig{}).empty());
}

TEST(ValidateDatapoint, PixelOutOfRange) {
  auto d = make_point(17.5, 0.5);
  d.images.left.data[0] = 1.5f;
  EXPECT_FALSE(validate_datapoint(d, LabelingConfig{}).empty());
}

TEST(ValidateDatapointProperty, AcceptedPointsCarryTheNormalizedLabel) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> force(-10.0, 50.0), label(-0.2, 1.2), coin(0.0, 1.0);
  const LabelingConfig cfg{2.0, 37.0, 3.0, 0.002};
  int accepted = 0;
  for (int i = 0; i < 2000; ++i) {
    const double f = force(rng);
    const auto n = normalize_label(f, cfg);
    auto d = make_point(f, coin(rng) < 0.5 ? n.label : label(rng));
    d.clamped = coin(rng) < 0.5 ? n.clamped : !n.clamped;
    const auto v = validate_datapoint(d, cfg);
    EXPECT_EQ(v, validate_datapoint(d, cfg));
    if (v.empty()) {
      ++accepted;
      const double expected = std::clamp((f - cfg.f_min) / (cfg.f_max - cfg.f_min), 0.0, 1.0);
      EXPECT_NEAR(d.label, expected, 1e-9);
    }
  }
  EXPECT_GT(accepted, 100);
}

TEST(Canonical9, IdempotentAndClose) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-100.0, 100.0);
  for (int i = 0; i < 1000; ++i) {
    const double v = u(rng);
    const double c = canonical9(v);
    EXPECT_EQ(canonical9(c), c);
    EXPECT_NEAR(c, v, std::abs(v) * 1e-8);
  }
}
