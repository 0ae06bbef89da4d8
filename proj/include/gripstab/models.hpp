#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "gripstab/core.hpp"

namespace gripstab {

enum class LayerKind { kConv, kBatchNorm, kRelu, kMaxPool, kDense, kDropout, kSigmoid, kAddSkip, kConcat, kFlatten };

std::string to_string(LayerKind k);
LayerKind layer_kind_from_string(const std::string& s);

// Kind-specific parameters live side by side; only the fields relevant to
// `kind` are meaningful (and serialised).
struct LayerSpec {
  LayerKind kind = LayerKind::kRelu;
  int filters = 0;  // conv
  int kernel = 0;   // conv, max_pool
  int stride = 1;   // conv, max_pool
  int units = 0;    // dense
  double rate = 0;  // dropout
  double momentum = 0.9;
  double epsilon = 1e-5;  // batch_norm

  static LayerSpec conv(int filters, int kernel, int stride = 1);
  static LayerSpec batch_norm();
  static LayerSpec relu();
  static LayerSpec max_pool(int size, int stride);
  static LayerSpec dense(int units);
  static LayerSpec dropout(double rate);
  static LayerSpec sigmoid();
  static LayerSpec add_skip();
  static LayerSpec concat();
  static LayerSpec flatten();

  std::vector<std::string> violations() const;
  bool operator==(const LayerSpec&) const = default;
};

// add_skip inputs are ordered {shortcut, residual}. Nodes with equal
// param_key share one parameter set.
struct Node {
  std::string name;
  LayerSpec layer;
  std::vector<std::string> inputs;
  std::string param_key;

  bool operator==(const Node&) const = default;
};

struct ModelSpec {
  std::string name;
  int height = 0;
  int width = 0;
  int channels = 3;
  std::vector<std::string> inputs{"left", "right"};
  std::vector<Node> nodes;
  std::string output;

  const Node* find(const std::string& node_name) const;
  bool operator==(const ModelSpec&) const = default;
};

// Per-sample activation shape, channels first.
struct Shape {
  int c = 0;
  int h = 0;
  int w = 0;

  std::size_t size() const { return static_cast<std::size_t>(c) * h * w; }
  bool operator==(const Shape&) const = default;
};

std::string to_string(const Shape& s);

struct ShapeRow {
  std::string node;
  LayerKind kind;
  std::vector<Shape> inputs;
  Shape output;
  std::size_t trainable = 0;  // parameters held by this node's parameter set
  std::size_t buffers = 0;    // running statistics
};

// Symbolic forward propagation in node order. Throws ShapeError naming the
// first inconsistent edge.
std::vector<ShapeRow> check_shapes(const ModelSpec& spec);

struct ParameterTally {
  std::size_t trainable = 0;
  std::size_t buffers = 0;
};

// Counts each parameter set once, however many nodes share it.
ParameterTally count_parameters(const ModelSpec& spec);

// Graph fragment with one external input named `input`.
struct Subgraph {
  std::string input;
  std::vector<Node> nodes;
  std::string output;
  int shortcut_pad_channels = 0;
  int shortcut_crop_channels = 0;
};

// conv -> relu -> bn -> conv -> add(input) -> relu -> bn. A narrower input is
// zero-padded along channels before the add; a wider one contributes only its
// first `filters` channels.
Subgraph build_resnet_block(int in_channels, int filters, const std::string& prefix = "block/",
                            const std::string& input = "x", const std::string& key_prefix = "");

struct SnnLayout {
  int stem_filters = 64;
  int stem_kernel = 7;
  int stem_stride = 2;
  int block_kernel = 3;
  int pool_size = 2;
  std::vector<int> encoder_filters{128, 256, 512};
  std::vector<int> decoder_filters{256, 128, 64, 32};
  std::vector<int> dense_units{512, 256, 128, 64};
  std::vector<int> dropout_after{2, 4};  // 1-based dense-layer positions
  double dropout_rate = 0.5;
  int min_input = 32;
};

// Encoder alone on a single input named "image".
ModelSpec build_snn_encoder(int height, int width, const SnnLayout& layout = {});
ModelSpec build_snn(int height, int width, const SnnLayout& layout = {});

struct BaselineLayout {
  std::vector<int> stage_filters{64, 128, 256, 512};
  int blocks_per_stage = 2;
  int min_input = 32;
  SnnLayout interpreter;  // dense head settings are taken from here
};

// ResNet-18 trunk shared across both images, concatenated, flattened, then the
// SNN's dense interpreter.
ModelSpec build_baseline(int height, int width, const BaselineLayout& layout = {});

// The dense head: everything from the first dense layer to the output.
std::vector<Node> interpreter_subgraph(const ModelSpec& spec);

// Structural equality of two node lists up to renaming.
bool isomorphic(const std::vector<Node>& a, const std::vector<Node>& b);

// Canonical JSON text; equal specs serialise to equal bytes.
std::string serialize_model(const ModelSpec& spec);
ModelSpec deserialize_model(const std::string& text);

ModelSpec build_model(const std::string& kind, int height, int width);

}  // namespace gripstab
