#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "gripstab/labeling.hpp"

using namespace gripstab;

namespace {

// Exhaustive scan: every index whose deviation is below epsilon, keep the last.
long oracle_slip_index(const ForceTrace& t, double eps) {
  long last = -1;
  for (std::size_t k = 0; k < t.size(); ++k)
    if (std::abs(t.measured[k] - t.desired[k]) < eps) last = static_cast<long>(k);
  return last;
}

ForceTrace random_trace(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> len(2, 80);
  std::normal_distribution<double> noise(0.0, 2.5);
  std::uniform_real_distribution<double> slip(0.0, 30.0);
  const int n = len(rng);
  const double s = slip(rng);
  ForceTrace t;
  for (int k = 0; k < n; ++k) {
    t.timestamps.push_back(0.1 * k);
    t.desired.push_back(std::floor(k / 10.0));
    t.measured.push_back(std::min(t.desired.back(), s) + noise(rng));
  }
  return t;
}

}  // namespace

TEST(DetectSlip, WorkedExampleSelectsIndexFive) {
  const ForceTrace t{{0, 1, 2, 3, 4, 5}, {0, 1, 2, 2.4, 2.4, 2.4}, {0, 1, 2, 3, 4, 5}};
  ASSERT_EQ(oracle_slip_index(t, 3.0), 5);
  const auto r = detect_slip(t, 3.0);
  EXPECT_EQ(r.index, 5u);
  EXPECT_DOUBLE_EQ(r.t_slip, 5.0);
  EXPECT_DOUBLE_EQ(r.f_max, 2.4);
}

TEST(DetectSlip, PerfectTrackingGivesLastSample) {
  const ForceTrace t{{0, 0.5, 1.0}, {1, 2, 3}, {1, 2, 3}};
  const auto r = detect_slip(t, 3.0);
  EXPECT_EQ(r.index, 2u);
  EXPECT_DOUBLE_EQ(r.f_max, 3.0);
}

TEST(DetectSlip, NeverTrackedThrows) {
  const ForceTrace t{{0, 1, 2}, {10, 10, 10}, {0, 1, 2}};
  EXPECT_THROW(detect_slip(t, 3.0), LabelingError);
  try {
    detect_slip(t, 3.0);
  } catch (const LabelingError& e) {
    EXPECT_NE(std::string(e.what()).find("never tracked"), std::string::npos);
  }
}

TEST(DetectSlip, RejectsBadInputs) {
  const ForceTrace t{{0, 1}, {0, 0}, {0, 0}};
  EXPECT_THROW(detect_slip(t, 0.0), ValidationError);
  const ForceTrace bad{{0, 0}, {0, 0}, {0, 0}};
  EXPECT_THROW(detect_slip(bad, 3.0), ValidationError);
}

TEST(DetectSlipProperty, MatchesExhaustiveScan) {
  std::mt19937_64 rng(2024);
  for (int i = 0; i < 500; ++i) {
    const auto t = random_trace(rng);
    const long expected = oracle_slip_index(t, 3.0);
    if (expected < 0) {
      EXPECT_THROW(detect_slip(t, 3.0), LabelingError);
    } else {
      const auto r = detect_slip(t, 3.0);
      EXPECT_EQ(static_cast<long>(r.index), expected);
      EXPECT_EQ(r.f_max, t.measured[r.index]);
      EXPECT_EQ(r.t_slip, t.timestamps[r.index]);
    }
  }
}

TEST(DetectSlipProperty, InvariantUnderAppendingDivergentSamples) {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> extra(3.0, 20.0);
  for (int i = 0; i < 200; ++i) {
    auto t = random_trace(rng);
    if (oracle_slip_index(t, 3.0) < 0) continue;
    const auto before = detect_slip(t, 3.0);
    for (int k = 0; k < 5; ++k) {
      t.timestamps.push_back(t.timestamps.back() + 0.1);
      t.desired.push_back(t.desired.back() + 1.0);
      t.measured.push_back(t.desired.back() - extra(rng));
    }
    const auto after = detect_slip(t, 3.0);
    EXPECT_EQ(after.index, before.index);
    EXPECT_EQ(after.f_max, before.f_max);
  }
}

TEST(NormalizeLabel, Examples) {
  const LabelingConfig cfg;
  EXPECT_DOUBLE_EQ(normalize_label(35.0, cfg).label, 1.0);
  EXPECT_FALSE(normalize_label(35.0, cfg).clamped);
  EXPECT_DOUBLE_EQ(normalize_label(0.0, cfg).label, 0.0);
  EXPECT_DOUBLE_EQ(normalize_label(17.5, cfg).label, 0.5);
}

TEST(NormalizeLabel, ClampsAndFlags) {
  const LabelingConfig cfg;
  const auto hi = normalize_label(40.0, cfg);
  EXPECT_DOUBLE_EQ(hi.label, 1.0);
  EXPECT_TRUE(hi.clamped);
  const auto lo = normalize_label(-2.0, cfg);
  EXPECT_DOUBLE_EQ(lo.label, 0.0);
  EXPECT_TRUE(lo.clamped);
}

TEST(NormalizeLabelProperty, MonotoneInForce) {
  const LabelingConfig cfg{1.0, 30.0, 3.0, 0.002};
  double prev = -1.0;
  for (double f = -5.0; f <= 40.0; f += 0.01) {
    const double l = normalize_label(f, cfg).label;
    EXPECT_GE(l, prev);
    prev = l;
  }
}

TEST(DenormalizeLabel, Examples) {
  const LabelingConfig cfg;
  EXPECT_DOUBLE_EQ(denormalize_label(1.0, cfg), 35.0);
  EXPECT_DOUBLE_EQ(denormalize_label(0.5, cfg), 17.5);
  EXPECT_THROW(denormalize_label(1.01, cfg), ValidationError);
  EXPECT_THROW(denormalize_label(-0.01, cfg), ValidationError);
}

TEST(DenormalizeLabelProperty, RoundTrip) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const LabelingConfig cfg{0.0, 35.0, 3.0, 0.002};
  for (int i = 0; i < 100; ++i) {
    const double l = u(rng);
    EXPECT_NEAR(normalize_label(denormalize_label(l, cfg), cfg).label, l, 1e-12);
  }
}

TEST(MovingAverage, TrailingWindow) {
  const std::vector<double> v{1, 2, 3, 4};
  EXPECT_EQ(moving_average(v, 1), v);
  EXPECT_EQ(moving_average(v, 0), v);
  const auto m = moving_average(v, 2);
  EXPECT_DOUBLE_EQ(m[0], 1.0);
  EXPECT_DOUBLE_EQ(m[1], 1.5);
  EXPECT_DOUBLE_EQ(m[3], 3.5);
}

TEST(LabelTrace, NormalizesDetectedForce) {
  const ForceTrace t{{0, 1, 2, 3, 4, 5}, {0, 1, 2, 2.4, 2.4, 2.4}, {0, 1, 2, 3, 4, 5}};
  const auto r = label_trace(t, LabelingConfig{});
  EXPECT_DOUBLE_EQ(r.raw_force, 2.4);
  EXPECT_NEAR(r.label, 2.4 / 35.0, 1e-9);
  EXPECT_FALSE(r.clamped);
}

TEST(LabelTrace, OptionalPrefilter) {
  const ForceTrace t{{0, 1, 2, 3}, {0, 6, 0, 9}, {0, 0, 0, 0}};
  EXPECT_EQ(label_trace(t, LabelingConfig{}).slip.index, 2u);
  LabelOptions o;
  o.prefilter_window = 2;
  EXPECT_EQ(label_trace(t, LabelingConfig{}, o).slip.index, 0u);
  o.prefilter_window = 4;
  EXPECT_EQ(label_trace(t, LabelingConfig{}, o).slip.index, 2u);
}
