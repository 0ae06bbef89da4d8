#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "gripstab/network.hpp"
#include "test_support.hpp"

using namespace gripstab;

namespace {

template <typename T>
Tensor<T> random_tensor(int c, int n, int h, int w, std::uint32_t seed, double scale = 1.0) {
  Tensor<T> t(c, n, h, w);
  std::mt19937 g(seed);
  std::normal_distribution<double> d(0.0, scale);
  for (auto& v : t.data) v = static_cast<T>(d(g));
  return t;
}

struct GradCheck {
  double worst = 0.0;
  std::size_t checked = 0;
};

// Central differences of the MSE loss against analytic gradients, parameter by parameter.
GradCheck gradient_check(Network<double>& net, const Tensor<double>& l, const Tensor<double>& r,
                         const std::vector<double>& labels, const ForwardOptions& opts) {
  const Tensor<double>* in[2] = {&l, &r};
  const auto n = labels.size();
  auto loss = [&] {
    const auto y = net.forward(in, opts);
    double s = 0;
    for (std::size_t i = 0; i < n; ++i) s += (y[i] - labels[i]) * (y[i] - labels[i]);
    return s / static_cast<double>(n);
  };
  const auto y = net.forward(in, opts);
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = 2 * (y[i] - labels[i]) / static_cast<double>(n);
  net.backward(d);
  const std::vector<double> analytic(net.gradients().begin(), net.gradients().end());

  GradCheck out;
  auto p = net.parameters();
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double h = 1e-6, w = p[k];
    p[k] = w + h;
    const double a = loss();
    p[k] = w - h;
    const double b = loss();
    p[k] = w;
    const double fd = (a - b) / (2 * h);
    // Below 1e-6 the difference quotient is dominated by roundoff (about 1e-16 / h),
    // so tiny gradients are compared in absolute terms.
    const double mag = std::abs(fd) + std::abs(analytic[k]);
    if (mag < 1e-10) continue;
    const double denom = std::max(mag, 1e-6);
    out.worst = std::max(out.worst, std::abs(fd - analytic[k]) / denom);
    ++out.checked;
  }
  return out;
}

}  // namespace

TEST(GradientCheck, TinyModelTrainMode) {
  Network<double> net(gripstab::testing::tiny_model());
  ASSERT_LE(net.parameters().size(), 1000u);
  net.initialize(3);
  const auto l = random_tensor<double>(2, 3, 6, 5, 1);
  const auto r = random_tensor<double>(2, 3, 6, 5, 2);
  const auto g = gradient_check(net, l, r, {0.2, 0.7, 0.4}, {Mode::kTrain, 7, false});
  EXPECT_GT(g.checked, net.parameters().size() / 2);
  EXPECT_LT(g.worst, 1e-4);
}

TEST(GradientCheck, TinyModelEvalMode) {
  Network<double> net(gripstab::testing::tiny_model(8, 7, 2));
  net.initialize(11);
  const auto l = random_tensor<double>(2, 4, 8, 7, 3);
  const auto r = random_tensor<double>(2, 4, 8, 7, 4);
  const Tensor<double>* in[2] = {&l, &r};
  for (int i = 0; i < 3; ++i) net.forward(in, {Mode::kTrain, 1, true});
  const auto g = gradient_check(net, l, r, {0.1, 0.9, 0.5, 0.3}, {Mode::kEval});
  EXPECT_LT(g.worst, 1e-4);
}

TEST(GradientCheckProperty, SeveralSeeds) {
  for (std::uint32_t seed = 20; seed < 24; ++seed) {
    Network<double> net(gripstab::testing::tiny_model());
    net.initialize(seed);
    const auto l = random_tensor<double>(2, 2, 6, 5, seed * 3);
    const auto r = random_tensor<double>(2, 2, 6, 5, seed * 5);
    EXPECT_LT(gradient_check(net, l, r, {0.25, 0.75}, {Mode::kTrain, seed, false}).worst, 1e-4) << seed;
  }
}

TEST(Network, OutputInUnitIntervalForAnyFiniteInput) {
  Network<float> net(gripstab::testing::tiny_model());
  for (std::uint32_t seed = 0; seed < 20; ++seed) {
    net.initialize(seed);
    const double scale = std::pow(10.0, static_cast<double>(seed % 5) - 1.0);
    const auto l = random_tensor<float>(2, 4, 6, 5, seed, scale);
    const auto r = random_tensor<float>(2, 4, 6, 5, seed + 100, scale);
    const Tensor<float>* in[2] = {&l, &r};
    for (auto mode : {Mode::kTrain, Mode::kEval})
      for (float y : net.forward(in, {mode, seed, false})) {
        EXPECT_TRUE(std::isfinite(y));
        EXPECT_GE(y, 0.0f);
        EXPECT_LE(y, 1.0f);
      }
  }
}

TEST(Network, SnnOutputInUnitInterval) {
  Network<float> net(build_snn(32, 32));
  net.initialize(5);
  const auto l = random_tensor<float>(3, 2, 32, 32, 1);
  const auto r = random_tensor<float>(3, 2, 32, 32, 2);
  const Tensor<float>* in[2] = {&l, &r};
  const auto y = net.forward(in, {Mode::kEval});
  ASSERT_EQ(y.size(), 2u);
  for (float v : y) {
    EXPECT_GT(v, 0.0f);
    EXPECT_LT(v, 1.0f);
  }
}

TEST(Network, EvalPassesAreBitIdentical) {
  Network<float> net(gripstab::testing::tiny_model());
  net.initialize(4);
  const auto l = random_tensor<float>(2, 5, 6, 5, 8);
  const auto r = random_tensor<float>(2, 5, 6, 5, 9);
  const Tensor<float>* in[2] = {&l, &r};
  net.forward(in, {Mode::kTrain, 3, true});
  const auto a = net.forward(in, {Mode::kEval, 1});
  const auto b = net.forward(in, {Mode::kEval, 2});
  EXPECT_EQ(a, b);
}

TEST(Network, DropoutActiveOnlyInTraining) {
  Network<float> net(gripstab::testing::tiny_model());
  net.initialize(4);
  const auto l = random_tensor<float>(2, 5, 6, 5, 8);
  const auto r = random_tensor<float>(2, 5, 6, 5, 9);
  const Tensor<float>* in[2] = {&l, &r};
  const auto a = net.forward(in, {Mode::kTrain, 1, false});
  const auto b = net.forward(in, {Mode::kTrain, 1, false});
  const auto c = net.forward(in, {Mode::kTrain, 2, false});
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
}

TEST(Network, InitializationIsSeeded) {
  Network<float> a(gripstab::testing::tiny_model()), b(gripstab::testing::tiny_model()), c(gripstab::testing::tiny_model());
  a.initialize(1);
  b.initialize(1);
  c.initialize(2);
  EXPECT_TRUE(std::equal(a.parameters().begin(), a.parameters().end(), b.parameters().begin()));
  EXPECT_FALSE(std::equal(a.parameters().begin(), a.parameters().end(), c.parameters().begin()));
}

TEST(Network, SharedParametersAccumulateBothBranches) {
  Network<double> net(gripstab::testing::tiny_model());
  EXPECT_EQ(net.parameter_offset("left/conv"), net.parameter_offset("right/conv"));
  EXPECT_EQ(net.parameter_offset("left/bn"), net.parameter_offset("right/bn"));
  EXPECT_THROW(net.parameter_offset("concat"), Error);
}

TEST(Network, BatchNormRunningStatistics) {
  ModelSpec m;
  m.height = 1;
  m.width = 1;
  m.channels = 1;
  m.inputs = {"x"};
  m.nodes = {{"bn", LayerSpec::batch_norm(), {"x"}, "bn"},
             {"flat", LayerSpec::flatten(), {"bn"}, ""},
             {"out", LayerSpec::sigmoid(), {"flat"}, ""}};
  m.output = "out";
  Network<double> net(m);
  net.initialize(0);
  Tensor<double> x(1, 4, 1, 1);
  x.data = {1, 2, 3, 6};
  const Tensor<double>* in[1] = {&x};
  net.forward(in, {Mode::kTrain, 0, true});
  // mean 3, unbiased variance 14/3
  EXPECT_NEAR(net.buffers()[0], 0.1 * 3.0, 1e-12);
  EXPECT_NEAR(net.buffers()[1], 0.9 * 1.0 + 0.1 * 14.0 / 3.0, 1e-12);
  net.forward(in, {Mode::kTrain, 0, false});
  EXPECT_NEAR(net.buffers()[0], 0.3, 1e-12);
}

TEST(Network, InputShapeMismatchIsShapeError) {
  Network<float> net(gripstab::testing::tiny_model());
  net.initialize(0);
  const auto l = random_tensor<float>(2, 2, 6, 5, 1);
  const auto bad = random_tensor<float>(2, 2, 7, 5, 1);
  const Tensor<float>* in[2] = {&l, &bad};
  EXPECT_THROW(net.forward(in, {Mode::kEval}), ShapeError);
  const Tensor<float>* one[1] = {&l};
  EXPECT_THROW(net.forward(one, {Mode::kEval}), ShapeError);
}
