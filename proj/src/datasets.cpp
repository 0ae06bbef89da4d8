#include "gripstab/datasets.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "gripstab/image_io.hpp"
#include "gripstab/rng.hpp"

namespace gripstab {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::string quoted(const std::string& s) { return json(s).dump(); }

void check_point_id(const std::string& id) {
  if (id.empty()) throw ValidationError("empty point id");
  for (char c : id) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' ||
                    c == '-' || c == '.';
    if (!ok) throw ValidationError("point id '" + id + "' contains characters unsafe for file names");
  }
}

fs::path image_path(const fs::path& root, const std::string& id, const char* side) {
  return root / "images" / (id + "_" + side + ".png");
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + p.string() + "' for writing");
  return out;
}

std::ifstream open_in(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot open '" + p.string() + "'");
  return in;
}

ordered_json labeling_json(const LabelingConfig& c) {
  return ordered_json{{"f_min", c.f_min}, {"f_max", c.f_max}, {"epsilon", c.epsilon}, {"delta_z", c.delta_z}};
}

LabelingConfig labeling_from(const json& j) {
  LabelingConfig c;
  c.f_min = j.at("f_min").get<double>();
  c.f_max = j.at("f_max").get<double>();
  c.epsilon = j.at("epsilon").get<double>();
  c.delta_z = j.at("delta_z").get<double>();
  return c;
}

void write_manifest(const DatasetManifest& m, const fs::path& root) {
  ordered_json j;
  j["schema_version"] = m.schema_version;
  j["name"] = m.name;
  j["creation_seed"] = m.creation_seed;
  j["image_width"] = m.image_width;
  j["image_height"] = m.image_height;
  j["labeling"] = labeling_json(m.labeling);
  j["object_classes"] = m.object_classes;
  j["points"] = m.points;
  auto out = open_out(root / "manifest");
  out << j.dump(2) << '\n';
  if (!out) throw IoError("failed writing manifest in '" + root.string() + "'");
}

std::string format_trace(const std::string& id, const ForceTrace& t) {
  std::string s = "{\"point_id\":" + quoted(id);
  auto arr = [&](const char* key, const std::vector<double>& v) {
    s += ",\"";
    s += key;
    s += "\":[";
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (i) s += ',';
      s += num(v[i]);
    }
    s += ']';
  };
  arr("t", t.timestamps);
  arr("measured", t.measured);
  arr("desired", t.desired);
  s += '}';
  return s;
}

template <typename Fn>
void guard_fs(const Fn& fn) {
  try {
    fn();
  } catch (const fs::filesystem_error& e) {
    throw IoError(e.what());
  }
}

}  // namespace

std::string format_record(const DataPoint& d) {
  const auto& g = d.config;
  std::string s;
  s += "{\"point_id\":" + quoted(d.point_id);
  s += ",\"class_id\":" + quoted(g.object_id);
  s += ",\"y\":" + num(g.y);
  s += ",\"z\":" + num(g.z);
  s += ",\"theta\":" + num(g.theta);
  s += ",\"grip_force\":" + num(g.grip_force);
  s += ",\"raw_force\":" + num(d.raw_force);
  s += ",\"label\":" + num(d.label);
  s += std::string(",\"clamped\":") + (d.clamped ? "true" : "false");
  s += '}';
  return s;
}

DataPoint parse_record(const std::string& line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception& e) {
    throw IoError(std::string("malformed record: ") + e.what());
  }
  try {
    DataPoint d;
    d.point_id = j.at("point_id").get<std::string>();
    d.config.object_id = j.at("class_id").get<std::string>();
    d.config.y = j.at("y").get<double>();
    d.config.z = j.at("z").get<double>();
    d.config.theta = j.at("theta").get<double>();
    d.config.grip_force = j.at("grip_force").get<double>();
    d.raw_force = j.at("raw_force").get<double>();
    d.label = j.at("label").get<double>();
    d.clamped = j.at("clamped").get<bool>();
    return d;
  } catch (const json::exception& e) {
    throw IoError(std::string("record missing field: ") + e.what());
  }
}

DatasetManifest save_dataset(std::span<const DataPoint> points, const fs::path& root, const DatasetInfo& info,
                             std::span<const ForceTrace> traces) {
  info.labeling.validate();
  if (!traces.empty() && traces.size() != points.size()) {
    throw ValidationError("save_dataset: trace count does not match point count");
  }
  std::unordered_set<std::string> seen;
  std::set<std::string> class_set;
  std::vector<std::string> classes;
  for (const auto& d : points) {
    check_point_id(d.point_id);
    if (!seen.insert(d.point_id).second) throw ValidationError("duplicate point id '" + d.point_id + "'");
    if (class_set.insert(d.config.object_id).second) classes.push_back(d.config.object_id);
    if (auto v = d.images.violations(); !v.empty()) {
      throw ValidationError("point '" + d.point_id + "' has invalid images: " + v.front());
    }
  }

  guard_fs([&] { fs::create_directories(root / "images"); });

  DatasetManifest m;
  m.name = info.name;
  m.labeling = info.labeling;
  m.creation_seed = info.creation_seed;
  m.object_classes = classes;
  if (!points.empty()) {
    m.image_width = points.front().images.left.width;
    m.image_height = points.front().images.left.height;
  }

  auto records = open_out(root / "points.ndrec");
  for (const auto& d : points) {
    if (d.images.left.width != m.image_width || d.images.left.height != m.image_height) {
      throw ValidationError("point '" + d.point_id + "' resolution differs from the rest of the dataset");
    }
    write_png(image_path(root, d.point_id, "left"), d.images.left);
    write_png(image_path(root, d.point_id, "right"), d.images.right);
    records << format_record(d) << '\n';
    m.points.push_back(d.point_id);
  }
  records.close();
  if (!records) throw IoError("failed writing records in '" + root.string() + "'");

  if (!traces.empty()) {
    auto out = open_out(root / "traces.ndrec");
    for (std::size_t i = 0; i < points.size(); ++i) out << format_trace(points[i].point_id, traces[i]) << '\n';
    if (!out) throw IoError("failed writing traces in '" + root.string() + "'");
  } else {
    guard_fs([&] { fs::remove(root / "traces.ndrec"); });
  }

  write_manifest(m, root);
  return m;
}

DatasetManifest load_manifest(const fs::path& root) {
  auto in = open_in(root / "manifest");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw IoError("malformed manifest in '" + root.string() + "': " + e.what());
  }
  DatasetManifest m;
  try {
    m.schema_version = j.at("schema_version").get<int>();
    if (m.schema_version != kSchemaVersion) {
      throw IoError("unsupported dataset schema_version " + std::to_string(m.schema_version));
    }
    m.name = j.at("name").get<std::string>();
    m.creation_seed = j.at("creation_seed").get<std::uint64_t>();
    m.image_width = j.at("image_width").get<int>();
    m.image_height = j.at("image_height").get<int>();
    m.labeling = labeling_from(j.at("labeling"));
    m.object_classes = j.at("object_classes").get<std::vector<std::string>>();
    m.points = j.at("points").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw IoError("manifest in '" + root.string() + "' missing field: " + e.what());
  }
  return m;
}

LoadedDataset load_dataset(const fs::path& root) {
  LoadedDataset out;
  out.manifest = load_manifest(root);

  std::unordered_map<std::string, DataPoint> by_id;
  auto in = open_in(root / "points.ndrec");
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    DataPoint d = parse_record(line);
    if (!(d.label >= 0.0 && d.label <= 1.0)) throw IoError("record '" + d.point_id + "' has label outside [0,1]");
    std::string id = d.point_id;
    if (!by_id.emplace(id, std::move(d)).second) throw IoError("duplicate record '" + id + "'");
  }

  out.points.reserve(out.manifest.points.size());
  for (const auto& id : out.manifest.points) {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw IoError("manifest references missing record '" + id + "'");
    DataPoint d = std::move(it->second);
    d.images.left = read_png(image_path(root, id, "left"));
    d.images.right = read_png(image_path(root, id, "right"));
    for (const Raster* r : {&d.images.left, &d.images.right}) {
      if (r->width != out.manifest.image_width || r->height != out.manifest.image_height) {
        throw IoError("image for '" + id + "' does not match the declared resolution");
      }
    }
    out.points.push_back(std::move(d));
  }
  return out;
}

bool has_traces(const fs::path& root) { return fs::exists(root / "traces.ndrec"); }

std::vector<ForceTrace> load_traces(const fs::path& root) {
  const auto m = load_manifest(root);
  std::unordered_map<std::string, ForceTrace> by_id;
  auto in = open_in(root / "traces.ndrec");
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      ForceTrace t;
      t.timestamps = j.at("t").get<std::vector<double>>();
      t.measured = j.at("measured").get<std::vector<double>>();
      t.desired = j.at("desired").get<std::vector<double>>();
      by_id[j.at("point_id").get<std::string>()] = std::move(t);
    } catch (const json::exception& e) {
      throw IoError(std::string("malformed trace record: ") + e.what());
    }
  }
  std::vector<ForceTrace> out;
  out.reserve(m.points.size());
  for (const auto& id : m.points) {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw IoError("no trace for point '" + id + "'");
    out.push_back(std::move(it->second));
  }
  return out;
}

void rewrite_records(std::span<const DataPoint> points, const fs::path& root, const LabelingConfig& labeling) {
  auto m = load_manifest(root);
  if (points.size() != m.points.size()) throw ValidationError("rewrite_records: point count differs from manifest");
  auto out = open_out(root / "points.ndrec");
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (points[i].point_id != m.points[i]) throw ValidationError("rewrite_records: point order differs from manifest");
    out << format_record(points[i]) << '\n';
  }
  out.close();
  if (!out) throw IoError("failed writing records in '" + root.string() + "'");
  m.labeling = labeling;
  write_manifest(m, root);
}

TrainValidationSplit split_train_validation(std::span<const DataPoint> points,
                                            std::span<const std::string> held_out_classes) {
  if (held_out_classes.empty()) throw ValidationError("split: no held-out classes given");
  std::set<std::string> present;
  for (const auto& d : points) present.insert(d.config.object_id);
  const std::set<std::string> held(held_out_classes.begin(), held_out_classes.end());
  for (const auto& c : held) {
    if (!present.count(c)) throw ValidationError("split: held-out class '" + c + "' not present in the dataset");
  }
  TrainValidationSplit s;
  for (std::size_t i = 0; i < points.size(); ++i) {
    (held.count(points[i].config.object_id) ? s.validation : s.train).push_back(i);
  }
  return s;
}

std::vector<std::size_t> FoldAssignment::members(int fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < assignment.size(); ++i)
    if (assignment[i] == fold) out.push_back(i);
  return out;
}

std::vector<std::size_t> FoldAssignment::complement(int fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < assignment.size(); ++i)
    if (assignment[i] != fold) out.push_back(i);
  return out;
}

FoldAssignment make_folds(std::size_t n_points, int n_folds, std::uint64_t seed) {
  if (n_folds < 2) throw ValidationError("make_folds: need at least two folds");
  if (n_points < static_cast<std::size_t>(n_folds)) {
    throw ValidationError("make_folds: " + std::to_string(n_points) + " points cannot fill " +
                          std::to_string(n_folds) + " folds");
  }
  std::vector<std::size_t> order(n_points);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, {tag(Stream::kFolds)}));
  std::shuffle(order.begin(), order.end(), rng);

  FoldAssignment f;
  f.n_folds = n_folds;
  f.assignment.assign(n_points, 0);
  for (std::size_t k = 0; k < n_points; ++k) f.assignment[order[k]] = static_cast<int>(k % n_folds);
  return f;
}

FoldAssignment make_folds(const DatasetManifest& dataset, int n_folds, std::uint64_t seed) {
  return make_folds(dataset.points.size(), n_folds, seed);
}

void save_split(const SplitFile& split, const fs::path& path) {
  ordered_json j;
  j["held_out_classes"] = split.held_out_classes;
  j["n_folds"] = split.n_folds;
  j["fold_seed"] = split.fold_seed;
  j["train"] = split.train_ids;
  j["fold_of_train"] = split.fold_of_train;
  j["validation"] = split.validation_ids;
  auto out = open_out(path);
  out << j.dump(2) << '\n';
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

SplitFile load_split(const fs::path& path) {
  auto in = open_in(path);
  try {
    const json j = json::parse(in);
    SplitFile s;
    s.held_out_classes = j.at("held_out_classes").get<std::vector<std::string>>();
    s.n_folds = j.at("n_folds").get<int>();
    s.fold_seed = j.at("fold_seed").get<std::uint64_t>();
    s.train_ids = j.at("train").get<std::vector<std::string>>();
    s.fold_of_train = j.at("fold_of_train").get<std::vector<int>>();
    s.validation_ids = j.at("validation").get<std::vector<std::string>>();
    if (s.fold_of_train.size() != s.train_ids.size()) throw IoError("split file fold table has the wrong length");
    return s;
  } catch (const json::exception& e) {
    throw IoError("malformed split file '" + path.string() + "': " + e.what());
  }
}

}  // namespace gripstab
