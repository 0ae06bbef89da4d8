#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "gripstab/models.hpp"
#include "gripstab/network.hpp"
#include "test_support.hpp"

using namespace gripstab;

namespace {

std::size_t conv_count(int c, int f, int k) { return static_cast<std::size_t>(c) * f * k * k + f; }
std::size_t bn_count(int c) { return 2 * static_cast<std::size_t>(c); }
std::size_t dense_count(int i, int o) { return static_cast<std::size_t>(i) * o + o; }

std::size_t block_count(int c, int f) {
  return conv_count(c, f, 3) + bn_count(f) + conv_count(f, f, 3) + bn_count(f);
}

int same_out(int n, int stride) { return (n + stride - 1) / stride; }

// Closed-form trainable count for the SNN.
std::size_t snn_oracle(int h, int w) {
  std::size_t n = conv_count(3, 64, 7) + bn_count(64);
  const int enc[] = {128, 256, 512};
  int c = 64;
  for (int i = 0; i < 3; ++i) {
    n += block_count(c, enc[i]);
    c = enc[i];
    if (i < 2) n += bn_count(c);
  }
  h = same_out(same_out(h, 2), 2);
  w = same_out(same_out(w, 2), 2);
  h = same_out(same_out(h, 2), 2);
  w = same_out(same_out(w, 2), 2);
  const int dec[] = {256, 128, 64, 32};
  c = 1024;
  for (int i = 0; i < 4; ++i) {
    n += block_count(c, dec[i]);
    c = dec[i];
    if (i < 3) {
      n += bn_count(c);
      h = same_out(h, 2);
      w = same_out(w, 2);
    }
  }
  int in = c * h * w;
  for (int units : {512, 256, 128, 64, 1}) {
    n += dense_count(in, units);
    in = units;
  }
  return n;
}

std::size_t baseline_oracle(int h, int w) {
  std::size_t n = conv_count(3, 64, 7) + bn_count(64);
  h = same_out(same_out(h, 2), 2);
  w = same_out(same_out(w, 2), 2);
  int c = 64;
  const int stages[] = {64, 128, 256, 512};
  for (int s = 0; s < 4; ++s) {
    for (int b = 0; b < 2; ++b) {
      const int f = stages[s];
      const int stride = (s > 0 && b == 0) ? 2 : 1;
      n += block_count(c, f);
      if (stride != 1 || c != f) n += conv_count(c, f, 1) + bn_count(f);
      if (stride == 2) {
        h = same_out(h, 2);
        w = same_out(w, 2);
      }
      c = f;
    }
  }
  int in = 2 * c * h * w;
  for (int units : {512, 256, 128, 64, 1}) {
    n += dense_count(in, units);
    in = units;
  }
  return n;
}

std::vector<const Node*> of_kind(const ModelSpec& m, LayerKind k) {
  std::vector<const Node*> out;
  for (const auto& n : m.nodes)
    if (n.layer.kind == k) out.push_back(&n);
  return out;
}

const ShapeRow& row(const std::vector<ShapeRow>& rows, const std::string& name) {
  auto it = std::find_if(rows.begin(), rows.end(), [&](const ShapeRow& r) { return r.node == name; });
  if (it == rows.end()) throw std::runtime_error("no row " + name);
  return *it;
}

}  // namespace

TEST(ResnetBlock, MatchingChannelsNeedNoPadding) {
  const auto b = build_resnet_block(128, 128);
  EXPECT_EQ(b.shortcut_pad_channels, 0);
  EXPECT_EQ(b.shortcut_crop_channels, 0);
}

TEST(ResnetBlock, WiderFiltersPadTheInput) {
  const auto b = build_resnet_block(128, 256);
  EXPECT_EQ(b.shortcut_pad_channels, 128);
}

TEST(ResnetBlock, LayerOrder) {
  const auto b = build_resnet_block(16, 32, "blk/", "in");
  std::vector<LayerKind> kinds;
  for (const auto& n : b.nodes) kinds.push_back(n.layer.kind);
  EXPECT_EQ(kinds, (std::vector<LayerKind>{LayerKind::kConv, LayerKind::kRelu, LayerKind::kBatchNorm, LayerKind::kConv,
                                           LayerKind::kAddSkip, LayerKind::kRelu, LayerKind::kBatchNorm}));
  const auto& add = b.nodes[4];
  ASSERT_EQ(add.inputs.size(), 2u);
  EXPECT_EQ(add.inputs[0], "in");
  EXPECT_EQ(add.inputs[1], b.nodes[3].name);
  EXPECT_EQ(b.output, b.nodes.back().name);
  for (const auto& n : b.nodes)
    if (n.layer.kind == LayerKind::kConv) EXPECT_EQ(n.layer.kernel, 3);
}

TEST(ResnetBlockProperty, ParameterTallyMatchesClosedForm) {
  for (int c : {1, 3, 16, 64, 128}) {
    for (int f : {1, 8, 32, 128, 256}) {
      const auto b = build_resnet_block(c, f, "b/", "x");
      ModelSpec m;
      m.height = 8;
      m.width = 8;
      m.channels = c;
      m.inputs = {"x"};
      m.nodes = b.nodes;
      m.output = b.output;
      const auto t = count_parameters(m);
      EXPECT_EQ(t.trainable, static_cast<std::size_t>(c) * f * 9 + static_cast<std::size_t>(f) * f * 9 + 6 * f);
      EXPECT_EQ(t.buffers, 4u * f);
      EXPECT_EQ(check_shapes(m).back().output, (Shape{f, 8, 8}));
    }
  }
}

TEST(Encoder, OutputHas512Channels) {
  for (auto [h, w] : {std::pair{480, 640}, std::pair{120, 160}, std::pair{32, 32}, std::pair{33, 47}}) {
    const auto e = build_snn_encoder(h, w);
    const auto rows = check_shapes(e);
    EXPECT_EQ(rows.back().output.c, 512) << h << "x" << w;
  }
  const auto rows = check_shapes(build_snn_encoder(120, 160));
  EXPECT_EQ(rows.back().output, (Shape{512, 8, 10}));
}

TEST(Encoder, TooSmallInputIsShapeError) {
  EXPECT_THROW(build_snn_encoder(8, 8), ShapeError);
  EXPECT_THROW(build_snn(8, 8), ShapeError);
  EXPECT_THROW(build_baseline(8, 8), ShapeError);
}

TEST(Snn, ArchitectureAudit) {
  const auto m = build_snn(120, 160);
  const auto rows = check_shapes(m);
  EXPECT_EQ(rows.size(), m.nodes.size());
  EXPECT_EQ(m.inputs, (std::vector<std::string>{"left", "right"}));

  EXPECT_EQ(row(rows, "left/encoder/block3/bn2").output.c, 512);
  EXPECT_EQ(row(rows, "right/encoder/block3/bn2").output.c, 512);
  const auto* concat = m.find("decoder/concat");
  ASSERT_NE(concat, nullptr);
  EXPECT_EQ(concat->layer.kind, LayerKind::kConcat);
  EXPECT_EQ(row(rows, "decoder/concat").output.c, 1024);

  std::vector<int> decoder_filters;
  for (const auto& n : m.nodes)
    if (n.name.rfind("decoder/", 0) == 0 && n.layer.kind == LayerKind::kConv && n.name.find("conv1") != std::string::npos)
      decoder_filters.push_back(n.layer.filters);
  EXPECT_EQ(decoder_filters, (std::vector<int>{256, 128, 64, 32}));

  std::vector<int> dense;
  for (const auto* n : of_kind(m, LayerKind::kDense)) dense.push_back(n->layer.units);
  EXPECT_EQ(dense, (std::vector<int>{512, 256, 128, 64, 1}));

  const auto drops = of_kind(m, LayerKind::kDropout);
  ASSERT_EQ(drops.size(), 2u);
  for (const auto* d : drops) EXPECT_DOUBLE_EQ(d->layer.rate, 0.5);
  EXPECT_EQ(m.find(drops[0]->inputs[0])->inputs[0], "interpreter/dense2");
  EXPECT_EQ(m.find(drops[1]->inputs[0])->inputs[0], "interpreter/dense4");

  const auto* out = m.find(m.output);
  ASSERT_NE(out, nullptr);
  EXPECT_EQ(out->layer.kind, LayerKind::kSigmoid);
  EXPECT_EQ(rows.back().output, (Shape{1, 1, 1}));
}

TEST(Snn, FullResolutionTableEndsWithScalar) {
  const auto m = build_snn(480, 640);
  const auto rows = check_shapes(m);
  EXPECT_EQ(rows.size(), m.nodes.size());
  EXPECT_EQ(rows.back().output, (Shape{1, 1, 1}));
}

TEST(Snn, EncoderBranchesShareParameters) {
  const auto m = build_snn(64, 64);
  std::size_t shared = 0;
  for (const auto& n : m.nodes) {
    if (n.name.rfind("left/", 0) != 0 || n.param_key.empty()) continue;
    const auto* twin = m.find("right/" + n.name.substr(5));
    ASSERT_NE(twin, nullptr) << n.name;
    EXPECT_EQ(twin->param_key, n.param_key);
    ++shared;
  }
  EXPECT_GT(shared, 10u);
  const Network<float> net(m);
  EXPECT_EQ(net.parameter_offset("left/encoder/stem_conv"), net.parameter_offset("right/encoder/stem_conv"));
  EXPECT_EQ(net.parameter_offset("left/encoder/block3/bn2"), net.parameter_offset("right/encoder/block3/bn2"));
  EXPECT_NE(net.parameter_offset("left/encoder/stem_conv"), net.parameter_offset("decoder/block1/conv1"));
}

TEST(SnnProperty, ParameterTallyMatchesClosedForm) {
  for (auto [h, w] : {std::pair{120, 160}, std::pair{480, 640}, std::pair{48, 64}, std::pair{37, 51}}) {
    const auto m = build_snn(h, w);
    EXPECT_EQ(count_parameters(m).trainable, snn_oracle(h, w)) << h << "x" << w;
    const Network<float> net(m);
    EXPECT_EQ(net.parameters().size(), snn_oracle(h, w));
  }
}

TEST(Baseline, SharesIsomorphicInterpreter) {
  const auto snn = build_snn(120, 160);
  const auto base = build_baseline(120, 160);
  const auto a = interpreter_subgraph(snn);
  const auto b = interpreter_subgraph(base);
  EXPECT_EQ(a.size(), 12u);
  EXPECT_TRUE(isomorphic(a, b));
  auto tampered = b;
  tampered[2].layer.units = 300;
  EXPECT_FALSE(isomorphic(a, tampered));
  auto rewired = b;
  std::swap(rewired[3], rewired[4]);
  EXPECT_FALSE(isomorphic(a, rewired));
  EXPECT_EQ(check_shapes(base).back().output, (Shape{1, 1, 1}));
}

TEST(Baseline, EighteenLayerDepth) {
  const auto base = build_baseline(120, 160);
  int main_path = 0, projections = 0;
  for (const auto& n : base.nodes) {
    if (n.name.rfind("left/trunk/", 0) != 0 || n.layer.kind != LayerKind::kConv) continue;
    if (n.name.find("proj") != std::string::npos)
      ++projections;
    else
      ++main_path;
  }
  EXPECT_EQ(main_path, 17);
  EXPECT_EQ(projections, 3);
  EXPECT_EQ(of_kind(base, LayerKind::kDense).size(), 5u);
}

TEST(BaselineProperty, ParameterTallyMatchesClosedForm) {
  for (auto [h, w] : {std::pair{120, 160}, std::pair{64, 64}, std::pair{45, 77}})
    EXPECT_EQ(count_parameters(build_baseline(h, w)).trainable, baseline_oracle(h, w)) << h << "x" << w;
}

TEST(CheckShapes, MismatchedConcatNamesTheEdge) {
  auto m = gripstab::testing::tiny_model(8, 8);
  for (auto& n : m.nodes)
    if (n.name == "right/conv") {
      n.layer.stride = 1;
      n.param_key = "right/conv";
    }
  try {
    check_shapes(m);
    FAIL();
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("concat"), std::string::npos) << msg;
    EXPECT_NE(msg.find("edge"), std::string::npos) << msg;
  }
}

TEST(CheckShapes, StructuralErrors) {
  auto m = gripstab::testing::tiny_model();
  m.nodes[5].inputs = {"nowhere"};
  EXPECT_THROW(check_shapes(m), ShapeError);

  m = gripstab::testing::tiny_model();
  m.output = "ghost";
  EXPECT_THROW(check_shapes(m), ShapeError);

  m = gripstab::testing::tiny_model();
  m.nodes[1].layer.filters = 4;  // shares "enc/conv" with a 3-filter conv
  EXPECT_THROW(check_shapes(m), ShapeError);

  m = gripstab::testing::tiny_model();
  m.nodes[13].layer.rate = 1.0;
  EXPECT_THROW(check_shapes(m), Error);
}

TEST(CheckShapes, TinyModelRows) {
  const auto m = gripstab::testing::tiny_model(6, 5, 2);
  const auto rows = check_shapes(m);
  EXPECT_EQ(rows.size(), m.nodes.size());
  EXPECT_EQ(row(rows, "left/conv").output, (Shape{3, 3, 3}));
  EXPECT_EQ(row(rows, "concat").output, (Shape{6, 3, 3}));
  EXPECT_EQ(row(rows, "pad_add").output, (Shape{8, 3, 3}));
  EXPECT_EQ(row(rows, "crop_add").output, (Shape{2, 3, 3}));
  EXPECT_EQ(row(rows, "pool").output, (Shape{2, 2, 2}));
  EXPECT_EQ(row(rows, "flatten").output, (Shape{8, 1, 1}));
  const auto t = count_parameters(m);
  EXPECT_EQ(t.trainable, conv_count(2, 3, 3) + bn_count(3) + conv_count(6, 8, 3) + conv_count(8, 2, 1) +
                             dense_count(8, 5) + dense_count(5, 1));
  EXPECT_EQ(t.buffers, 6u);
}

TEST(Serialization, CanonicalRoundTrip) {
  for (const auto& m : {build_snn(120, 160), build_baseline(64, 64), gripstab::testing::tiny_model()}) {
    const auto text = serialize_model(m);
    const auto back = deserialize_model(text);
    EXPECT_EQ(back, m);
    EXPECT_EQ(serialize_model(back), text);
  }
  EXPECT_THROW(deserialize_model("{}"), Error);
  EXPECT_THROW(deserialize_model("not json"), Error);
}

TEST(LayerKinds, StringRoundTripAndValidation) {
  for (auto k : {LayerKind::kConv, LayerKind::kBatchNorm, LayerKind::kRelu, LayerKind::kMaxPool, LayerKind::kDense,
                 LayerKind::kDropout, LayerKind::kSigmoid, LayerKind::kAddSkip, LayerKind::kConcat, LayerKind::kFlatten})
    EXPECT_EQ(layer_kind_from_string(to_string(k)), k);
  EXPECT_THROW(layer_kind_from_string("attention"), Error);
  EXPECT_TRUE(LayerSpec::conv(4, 3).violations().empty());
  EXPECT_FALSE(LayerSpec::conv(0, 3).violations().empty());
  EXPECT_FALSE(LayerSpec::dropout(0.0).violations().empty());
  EXPECT_FALSE(LayerSpec::dropout(1.0).violations().empty());
  EXPECT_FALSE(LayerSpec::dense(0).violations().empty());
}

TEST(BuildModel, Kinds) {
  EXPECT_EQ(build_model("snn", 64, 64), build_snn(64, 64));
  EXPECT_EQ(build_model("baseline", 64, 64), build_baseline(64, 64));
  EXPECT_EQ(build_model("resnet18", 64, 64), build_baseline(64, 64));
  EXPECT_THROW(build_model("vgg", 64, 64), ValidationError);
}
