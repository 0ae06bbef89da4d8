#include "gripstab/models.hpp"

#include <algorithm>
#include <map>
#include <unordered_map>

#include <json.hpp>

namespace gripstab {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

bool is_parametric(LayerKind k) {
  return k == LayerKind::kConv || k == LayerKind::kBatchNorm || k == LayerKind::kDense;
}

int ceil_div(int a, int b) { return (a + b - 1) / b; }

struct Appender {
  std::vector<Node>& nodes;

  std::string add(const std::string& name, LayerSpec layer, std::vector<std::string> inputs,
                  const std::string& key = "") {
    Node n{name, layer, std::move(inputs), ""};
    if (is_parametric(layer.kind)) n.param_key = key.empty() ? name : key;
    nodes.push_back(std::move(n));
    return name;
  }

  std::string append(Subgraph g) {
    for (auto& n : g.nodes) nodes.push_back(std::move(n));
    return g.output;
  }
};

void check_input_size(int height, int width, int min_input) {
  if (height < min_input || width < min_input) {
    throw ShapeError("input " + std::to_string(height) + "x" + std::to_string(width) +
                     " is too small for the pooling cascade (minimum " + std::to_string(min_input) + "x" +
                     std::to_string(min_input) + ")");
  }
}

// Returns the encoder output node name; channels are written to out_channels.
std::string append_encoder(Appender& g, const std::string& input, int in_channels, const std::string& prefix,
                           const SnnLayout& L, int& out_channels) {
  const std::string key = "encoder/";
  std::string x = g.add(prefix + "stem_conv", LayerSpec::conv(L.stem_filters, L.stem_kernel, L.stem_stride),
                        {input}, key + "stem_conv");
  x = g.add(prefix + "stem_pool", LayerSpec::max_pool(L.pool_size, 2), {x});
  x = g.add(prefix + "stem_relu", LayerSpec::relu(), {x});
  x = g.add(prefix + "stem_bn", LayerSpec::batch_norm(), {x}, key + "stem_bn");
  (void)in_channels;
  int c = L.stem_filters;
  for (std::size_t i = 0; i < L.encoder_filters.size(); ++i) {
    const std::string b = "block" + std::to_string(i + 1) + "/";
    x = g.append(build_resnet_block(c, L.encoder_filters[i], prefix + b, x, key + b));
    c = L.encoder_filters[i];
    if (i + 1 < L.encoder_filters.size()) {
      const std::string t = "transition" + std::to_string(i + 1) + "/";
      x = g.add(prefix + t + "pool", LayerSpec::max_pool(L.pool_size, 2), {x});
      x = g.add(prefix + t + "relu", LayerSpec::relu(), {x});
      x = g.add(prefix + t + "bn", LayerSpec::batch_norm(), {x}, key + t + "bn");
    }
  }
  out_channels = c;
  return x;
}

std::string append_interpreter(Appender& g, const std::string& input, const SnnLayout& L) {
  std::string x = input;
  for (std::size_t i = 0; i < L.dense_units.size(); ++i) {
    const int pos = static_cast<int>(i) + 1;
    const std::string p = "interpreter/dense" + std::to_string(pos);
    x = g.add(p, LayerSpec::dense(L.dense_units[i]), {x});
    x = g.add(p + "_relu", LayerSpec::relu(), {x});
    if (std::find(L.dropout_after.begin(), L.dropout_after.end(), pos) != L.dropout_after.end()) {
      x = g.add(p + "_dropout", LayerSpec::dropout(L.dropout_rate), {x});
    }
  }
  x = g.add("interpreter/output", LayerSpec::dense(1), {x});
  return g.add("interpreter/sigmoid", LayerSpec::sigmoid(), {x});
}

ordered_json node_json(const Node& n) {
  ordered_json j;
  j["name"] = n.name;
  j["kind"] = to_string(n.layer.kind);
  j["inputs"] = n.inputs;
  if (!n.param_key.empty()) j["param_key"] = n.param_key;
  const auto& l = n.layer;
  switch (l.kind) {
    case LayerKind::kConv:
      j["filters"] = l.filters;
      j["kernel"] = l.kernel;
      j["stride"] = l.stride;
      break;
    case LayerKind::kMaxPool:
      j["kernel"] = l.kernel;
      j["stride"] = l.stride;
      break;
    case LayerKind::kDense:
      j["units"] = l.units;
      break;
    case LayerKind::kDropout:
      j["rate"] = l.rate;
      break;
    case LayerKind::kBatchNorm:
      j["momentum"] = l.momentum;
      j["epsilon"] = l.epsilon;
      break;
    default:
      break;
  }
  return j;
}

}  // namespace

std::string to_string(LayerKind k) {
  switch (k) {
    case LayerKind::kConv:
      return "conv";
    case LayerKind::kBatchNorm:
      return "batch_norm";
    case LayerKind::kRelu:
      return "relu";
    case LayerKind::kMaxPool:
      return "max_pool";
    case LayerKind::kDense:
      return "dense";
    case LayerKind::kDropout:
      return "dropout";
    case LayerKind::kSigmoid:
      return "sigmoid";
    case LayerKind::kAddSkip:
      return "add_skip";
    case LayerKind::kConcat:
      return "concat";
    case LayerKind::kFlatten:
      return "flatten";
  }
  return "unknown";
}

LayerKind layer_kind_from_string(const std::string& s) {
  static const std::map<std::string, LayerKind> table{
      {"conv", LayerKind::kConv},       {"batch_norm", LayerKind::kBatchNorm}, {"relu", LayerKind::kRelu},
      {"max_pool", LayerKind::kMaxPool}, {"dense", LayerKind::kDense},         {"dropout", LayerKind::kDropout},
      {"sigmoid", LayerKind::kSigmoid}, {"add_skip", LayerKind::kAddSkip},    {"concat", LayerKind::kConcat},
      {"flatten", LayerKind::kFlatten}};
  auto it = table.find(s);
  if (it == table.end()) throw ValidationError("unknown layer kind '" + s + "'");
  return it->second;
}

LayerSpec LayerSpec::conv(int filters, int kernel, int stride) {
  LayerSpec l;
  l.kind = LayerKind::kConv;
  l.filters = filters;
  l.kernel = kernel;
  l.stride = stride;
  return l;
}
LayerSpec LayerSpec::batch_norm() {
  LayerSpec l;
  l.kind = LayerKind::kBatchNorm;
  return l;
}
LayerSpec LayerSpec::relu() { return LayerSpec{}; }
LayerSpec LayerSpec::max_pool(int size, int stride) {
  LayerSpec l;
  l.kind = LayerKind::kMaxPool;
  l.kernel = size;
  l.stride = stride;
  return l;
}
LayerSpec LayerSpec::dense(int units) {
  LayerSpec l;
  l.kind = LayerKind::kDense;
  l.units = units;
  return l;
}
LayerSpec LayerSpec::dropout(double rate) {
  LayerSpec l;
  l.kind = LayerKind::kDropout;
  l.rate = rate;
  return l;
}
LayerSpec LayerSpec::sigmoid() {
  LayerSpec l;
  l.kind = LayerKind::kSigmoid;
  return l;
}
LayerSpec LayerSpec::add_skip() {
  LayerSpec l;
  l.kind = LayerKind::kAddSkip;
  return l;
}
LayerSpec LayerSpec::concat() {
  LayerSpec l;
  l.kind = LayerKind::kConcat;
  return l;
}
LayerSpec LayerSpec::flatten() {
  LayerSpec l;
  l.kind = LayerKind::kFlatten;
  return l;
}

std::vector<std::string> LayerSpec::violations() const {
  std::vector<std::string> v;
  switch (kind) {
    case LayerKind::kConv:
      if (filters < 1) v.emplace_back("conv filters must be >= 1");
      if (kernel < 1) v.emplace_back("conv kernel must be >= 1");
      if (stride < 1) v.emplace_back("conv stride must be >= 1");
      break;
    case LayerKind::kMaxPool:
      if (kernel < 1 || stride < 1) v.emplace_back("pool size and stride must be >= 1");
      break;
    case LayerKind::kDense:
      if (units < 1) v.emplace_back("dense units must be >= 1");
      break;
    case LayerKind::kDropout:
      if (!(rate > 0.0 && rate < 1.0)) v.emplace_back("dropout rate must lie in (0,1)");
      break;
    case LayerKind::kBatchNorm:
      if (!(momentum >= 0.0 && momentum < 1.0)) v.emplace_back("batch-norm momentum must lie in [0,1)");
      if (!(epsilon > 0.0)) v.emplace_back("batch-norm epsilon must be > 0");
      break;
    default:
      break;
  }
  return v;
}

const Node* ModelSpec::find(const std::string& node_name) const {
  for (const auto& n : nodes)
    if (n.name == node_name) return &n;
  return nullptr;
}

std::string to_string(const Shape& s) {
  return "(" + std::to_string(s.c) + "," + std::to_string(s.h) + "," + std::to_string(s.w) + ")";
}

std::vector<ShapeRow> check_shapes(const ModelSpec& spec) {
  if (spec.inputs.empty()) throw ShapeError("model '" + spec.name + "' has no inputs");
  if (spec.height < 1 || spec.width < 1 || spec.channels < 1) throw ShapeError("model input shape must be positive");

  std::unordered_map<std::string, Shape> shapes;
  for (const auto& in : spec.inputs) shapes[in] = Shape{spec.channels, spec.height, spec.width};

  // Shared parameter sets must agree on every dimension.
  std::unordered_map<std::string, std::pair<LayerSpec, Shape>> key_sig;

  std::vector<ShapeRow> rows;
  rows.reserve(spec.nodes.size());
  for (const auto& n : spec.nodes) {
    if (shapes.count(n.name)) throw ShapeError("duplicate node name '" + n.name + "'");
    if (auto v = n.layer.violations(); !v.empty()) throw ShapeError("node '" + n.name + "': " + v.front());

    ShapeRow row{n.name, n.layer.kind, {}, {}, 0, 0};
    for (const auto& src : n.inputs) {
      auto it = shapes.find(src);
      if (it == shapes.end()) {
        throw ShapeError("edge '" + src + "' -> '" + n.name + "': source is not defined before its consumer");
      }
      row.inputs.push_back(it->second);
    }
    auto arity = [&](std::size_t expected) {
      if (row.inputs.size() != expected) {
        throw ShapeError("node '" + n.name + "' (" + to_string(n.layer.kind) + ") expects " +
                         std::to_string(expected) + " input(s), got " + std::to_string(row.inputs.size()));
      }
    };
    const auto& L = n.layer;
    switch (L.kind) {
      case LayerKind::kConv: {
        arity(1);
        const Shape in = row.inputs[0];
        row.output = {L.filters, ceil_div(in.h, L.stride), ceil_div(in.w, L.stride)};
        row.trainable = static_cast<std::size_t>(L.filters) * in.c * L.kernel * L.kernel + L.filters;
        break;
      }
      case LayerKind::kBatchNorm:
        arity(1);
        row.output = row.inputs[0];
        row.trainable = 2 * static_cast<std::size_t>(row.output.c);
        row.buffers = 2 * static_cast<std::size_t>(row.output.c);
        break;
      case LayerKind::kRelu:
      case LayerKind::kSigmoid:
      case LayerKind::kDropout:
        arity(1);
        row.output = row.inputs[0];
        break;
      case LayerKind::kMaxPool: {
        arity(1);
        const Shape in = row.inputs[0];
        row.output = {in.c, ceil_div(in.h, L.stride), ceil_div(in.w, L.stride)};
        break;
      }
      case LayerKind::kDense: {
        arity(1);
        const Shape in = row.inputs[0];
        if (in.h != 1 || in.w != 1) {
          throw ShapeError("edge '" + n.inputs[0] + "' -> '" + n.name + "': dense layer needs a flat input, got " +
                           to_string(in));
        }
        row.output = {L.units, 1, 1};
        row.trainable = static_cast<std::size_t>(L.units) * in.c + L.units;
        break;
      }
      case LayerKind::kAddSkip: {
        arity(2);
        const Shape a = row.inputs[0], b = row.inputs[1];
        if (a.h != b.h || a.w != b.w) {
          throw ShapeError("edge '" + n.inputs[0] + "' -> '" + n.name + "': skip spatial dims " + to_string(a) +
                           " do not match residual " + to_string(b));
        }
        row.output = b;
        break;
      }
      case LayerKind::kConcat: {
        if (row.inputs.size() < 2) throw ShapeError("concat node '" + n.name + "' needs at least two inputs");
        Shape out = row.inputs[0];
        for (std::size_t i = 1; i < row.inputs.size(); ++i) {
          const Shape s = row.inputs[i];
          if (s.h != out.h || s.w != out.w) {
            throw ShapeError("edge '" + n.inputs[i] + "' -> '" + n.name + "': concat spatial dims " + to_string(s) +
                             " do not match " + to_string(out));
          }
          out.c += s.c;
        }
        row.output = out;
        break;
      }
      case LayerKind::kFlatten:
        arity(1);
        row.output = {static_cast<int>(row.inputs[0].size()), 1, 1};
        break;
    }
    if (row.output.c < 1 || row.output.h < 1 || row.output.w < 1) {
      throw ShapeError("node '" + n.name + "' produces an empty tensor " + to_string(row.output));
    }

    if (is_parametric(L.kind)) {
      if (n.param_key.empty()) throw ShapeError("parametric node '" + n.name + "' has no parameter key");
      const Shape sig_in = L.kind == LayerKind::kBatchNorm ? Shape{row.output.c, 0, 0} : Shape{row.inputs[0].c, 0, 0};
      auto [it, fresh] = key_sig.try_emplace(n.param_key, L, sig_in);
      if (!fresh && (!(it->second.first == L) || !(it->second.second == sig_in))) {
        throw ShapeError("node '" + n.name + "' shares parameter set '" + n.param_key +
                         "' with an incompatible layer");
      }
    }
    shapes[n.name] = row.output;
    rows.push_back(std::move(row));
  }
  if (!shapes.count(spec.output)) throw ShapeError("model output '" + spec.output + "' is not a node");
  return rows;
}

ParameterTally count_parameters(const ModelSpec& spec) {
  const auto rows = check_shapes(spec);
  ParameterTally t;
  std::unordered_map<std::string, bool> seen;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& key = spec.nodes[i].param_key;
    if (key.empty() || seen[key]) continue;
    seen[key] = true;
    t.trainable += rows[i].trainable;
    t.buffers += rows[i].buffers;
  }
  return t;
}

Subgraph build_resnet_block(int in_channels, int filters, const std::string& prefix, const std::string& input,
                            const std::string& key_prefix) {
  if (filters < 1) throw ValidationError("resnet block needs at least one filter");
  Subgraph g;
  g.input = input;
  g.shortcut_pad_channels = std::max(0, filters - in_channels);
  g.shortcut_crop_channels = std::max(0, in_channels - filters);
  Appender a{g.nodes};
  const std::string key = key_prefix.empty() ? prefix : key_prefix;
  std::string x = a.add(prefix + "conv1", LayerSpec::conv(filters, 3), {input}, key + "conv1");
  x = a.add(prefix + "relu1", LayerSpec::relu(), {x});
  x = a.add(prefix + "bn1", LayerSpec::batch_norm(), {x}, key + "bn1");
  x = a.add(prefix + "conv2", LayerSpec::conv(filters, 3), {x}, key + "conv2");
  x = a.add(prefix + "add", LayerSpec::add_skip(), {input, x});
  x = a.add(prefix + "relu2", LayerSpec::relu(), {x});
  g.output = a.add(prefix + "bn2", LayerSpec::batch_norm(), {x}, key + "bn2");
  return g;
}

ModelSpec build_snn_encoder(int height, int width, const SnnLayout& layout) {
  check_input_size(height, width, layout.min_input);
  ModelSpec spec;
  spec.name = "snn_encoder";
  spec.height = height;
  spec.width = width;
  spec.inputs = {"image"};
  Appender g{spec.nodes};
  int c = 0;
  spec.output = append_encoder(g, "image", spec.channels, "encoder/", layout, c);
  check_shapes(spec);
  return spec;
}

ModelSpec build_snn(int height, int width, const SnnLayout& layout) {
  check_input_size(height, width, layout.min_input);
  ModelSpec spec;
  spec.name = "snn";
  spec.height = height;
  spec.width = width;
  Appender g{spec.nodes};
  int c_left = 0, c_right = 0;
  const std::string left = append_encoder(g, "left", spec.channels, "left/encoder/", layout, c_left);
  const std::string right = append_encoder(g, "right", spec.channels, "right/encoder/", layout, c_right);
  std::string x = g.add("decoder/concat", LayerSpec::concat(), {left, right});
  int c = c_left + c_right;
  for (std::size_t i = 0; i < layout.decoder_filters.size(); ++i) {
    const std::string b = "decoder/block" + std::to_string(i + 1) + "/";
    x = g.append(build_resnet_block(c, layout.decoder_filters[i], b, x));
    c = layout.decoder_filters[i];
    if (i + 1 < layout.decoder_filters.size()) {
      const std::string t = "decoder/transition" + std::to_string(i + 1) + "/";
      x = g.add(t + "bn", LayerSpec::batch_norm(), {x});
      x = g.add(t + "pool", LayerSpec::max_pool(layout.pool_size, 2), {x});
      x = g.add(t + "relu", LayerSpec::relu(), {x});
    }
  }
  x = g.add("decoder/flatten", LayerSpec::flatten(), {x});
  spec.output = append_interpreter(g, x, layout);
  check_shapes(spec);
  return spec;
}

ModelSpec build_baseline(int height, int width, const BaselineLayout& layout) {
  check_input_size(height, width, layout.min_input);
  ModelSpec spec;
  spec.name = "resnet18";
  spec.height = height;
  spec.width = width;
  Appender g{spec.nodes};

  auto trunk = [&](const std::string& input, const std::string& side) {
    const std::string p = side + "/trunk/";
    const std::string k = "trunk/";
    std::string x = g.add(p + "conv1", LayerSpec::conv(layout.stage_filters.front(), 7, 2), {input}, k + "conv1");
    x = g.add(p + "bn1", LayerSpec::batch_norm(), {x}, k + "bn1");
    x = g.add(p + "relu1", LayerSpec::relu(), {x});
    x = g.add(p + "pool1", LayerSpec::max_pool(3, 2), {x});
    int c = layout.stage_filters.front();
    for (std::size_t s = 0; s < layout.stage_filters.size(); ++s) {
      const int f = layout.stage_filters[s];
      for (int b = 0; b < layout.blocks_per_stage; ++b) {
        const int stride = (s > 0 && b == 0) ? 2 : 1;
        const std::string q = "stage" + std::to_string(s + 1) + "/block" + std::to_string(b + 1) + "/";
        std::string y = g.add(p + q + "conv1", LayerSpec::conv(f, 3, stride), {x}, k + q + "conv1");
        y = g.add(p + q + "bn1", LayerSpec::batch_norm(), {y}, k + q + "bn1");
        y = g.add(p + q + "relu1", LayerSpec::relu(), {y});
        y = g.add(p + q + "conv2", LayerSpec::conv(f, 3, 1), {y}, k + q + "conv2");
        y = g.add(p + q + "bn2", LayerSpec::batch_norm(), {y}, k + q + "bn2");
        std::string shortcut = x;
        if (stride != 1 || c != f) {
          shortcut = g.add(p + q + "proj_conv", LayerSpec::conv(f, 1, stride), {x}, k + q + "proj_conv");
          shortcut = g.add(p + q + "proj_bn", LayerSpec::batch_norm(), {shortcut}, k + q + "proj_bn");
        }
        y = g.add(p + q + "add", LayerSpec::add_skip(), {shortcut, y});
        x = g.add(p + q + "relu2", LayerSpec::relu(), {y});
        c = f;
      }
    }
    return x;
  };

  const std::string left = trunk("left", "left");
  const std::string right = trunk("right", "right");
  std::string x = g.add("head/concat", LayerSpec::concat(), {left, right});
  x = g.add("head/flatten", LayerSpec::flatten(), {x});
  spec.output = append_interpreter(g, x, layout.interpreter);
  check_shapes(spec);
  return spec;
}

std::vector<Node> interpreter_subgraph(const ModelSpec& spec) {
  auto it = std::find_if(spec.nodes.begin(), spec.nodes.end(),
                         [](const Node& n) { return n.layer.kind == LayerKind::kDense; });
  return {it, spec.nodes.end()};
}

bool isomorphic(const std::vector<Node>& a, const std::vector<Node>& b) {
  if (a.size() != b.size()) return false;
  std::unordered_map<std::string, std::size_t> ia, ib;
  for (std::size_t i = 0; i < a.size(); ++i) ia[a[i].name] = i;
  for (std::size_t i = 0; i < b.size(); ++i) ib[b[i].name] = i;
  std::map<std::string, std::string> external;  // a's external inputs -> b's
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!(a[i].layer == b[i].layer) || a[i].inputs.size() != b[i].inputs.size()) return false;
    for (std::size_t k = 0; k < a[i].inputs.size(); ++k) {
      auto xa = ia.find(a[i].inputs[k]);
      auto xb = ib.find(b[i].inputs[k]);
      if ((xa == ia.end()) != (xb == ib.end())) return false;
      if (xa != ia.end()) {
        if (xa->second != xb->second) return false;
      } else {
        auto [e, fresh] = external.try_emplace(a[i].inputs[k], b[i].inputs[k]);
        if (!fresh && e->second != b[i].inputs[k]) return false;
      }
    }
  }
  return true;
}

std::string serialize_model(const ModelSpec& spec) {
  ordered_json j;
  j["format"] = "gripstab-model";
  j["version"] = 1;
  j["name"] = spec.name;
  j["input"] = ordered_json{{"height", spec.height}, {"width", spec.width}, {"channels", spec.channels}};
  j["inputs"] = spec.inputs;
  ordered_json nodes = ordered_json::array();
  for (const auto& n : spec.nodes) nodes.push_back(node_json(n));
  j["nodes"] = std::move(nodes);
  j["output"] = spec.output;
  return j.dump();
}

ModelSpec deserialize_model(const std::string& text) {
  try {
    const json j = json::parse(text);
    if (j.at("format").get<std::string>() != "gripstab-model") throw ValidationError("not a model description");
    ModelSpec spec;
    spec.name = j.at("name").get<std::string>();
    spec.height = j.at("input").at("height").get<int>();
    spec.width = j.at("input").at("width").get<int>();
    spec.channels = j.at("input").at("channels").get<int>();
    spec.inputs = j.at("inputs").get<std::vector<std::string>>();
    for (const auto& jn : j.at("nodes")) {
      Node n;
      n.name = jn.at("name").get<std::string>();
      n.layer.kind = layer_kind_from_string(jn.at("kind").get<std::string>());
      n.inputs = jn.at("inputs").get<std::vector<std::string>>();
      n.param_key = jn.value("param_key", std::string{});
      n.layer.filters = jn.value("filters", 0);
      n.layer.kernel = jn.value("kernel", 0);
      n.layer.stride = jn.value("stride", 1);
      n.layer.units = jn.value("units", 0);
      n.layer.rate = jn.value("rate", 0.0);
      n.layer.momentum = jn.value("momentum", 0.9);
      n.layer.epsilon = jn.value("epsilon", 1e-5);
      spec.nodes.push_back(std::move(n));
    }
    spec.output = j.at("output").get<std::string>();
    return spec;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed model description: ") + e.what());
  }
}

ModelSpec build_model(const std::string& kind, int height, int width) {
  if (kind == "snn") return build_snn(height, width);
  if (kind == "baseline" || kind == "resnet18") return build_baseline(height, width);
  throw ValidationError("unknown model kind '" + kind + "' (expected snn or baseline)");
}

}  // namespace gripstab
