#include "app.hpp"

#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>

#include "gripstab/datasets.hpp"
#include "gripstab/evaluation.hpp"
#include "gripstab/labeling.hpp"
#include "gripstab/models.hpp"

namespace gripstab::app {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

void check_keys(const json& j, const std::string& section, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ValidationError("config section '" + section + "' must be an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : j.items()) {
    if (!ok.count(key)) throw ValidationError("unknown key '" + key + "' in config section '" + section + "'");
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

SyntheticObjectClass parse_class(const json& j) {
  if (j.is_string()) {
    const auto name = j.get<std::string>();
    for (const auto& c : default_object_classes())
      if (c.class_id == name) return c;
    throw ValidationError("unknown object class '" + name + "'");
  }
  check_keys(j, "pullsim.classes[]", {"class_id", "friction_mu", "contact_shape", "shape_params", "texture_seed"});
  SyntheticObjectClass c;
  c.class_id = j.at("class_id").get<std::string>();
  read(j, "friction_mu", c.friction_mu);
  if (j.contains("contact_shape")) c.contact_shape = contact_shape_from_string(j.at("contact_shape").get<std::string>());
  read(j, "shape_params", c.shape_params);
  read(j, "texture_seed", c.texture_seed);
  return c;
}

ordered_json class_to_json(const SyntheticObjectClass& c) {
  ordered_json j;
  j["class_id"] = c.class_id;
  j["friction_mu"] = c.friction_mu;
  j["contact_shape"] = to_string(c.contact_shape);
  j["shape_params"] = c.shape_params;
  j["texture_seed"] = c.texture_seed;
  return j;
}

fs::path resolve(const fs::path& root, const fs::path& p) { return p.is_absolute() ? p : root / p; }

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void make_dirs(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());
}

RunConfig effective(const Invocation& inv) {
  RunConfig c = inv.config;
  if (inv.overrides.seed) c.seed = *inv.overrides.seed;
  c.simulator.rng_seed = c.seed;
  c.training.seed = c.seed;
  c.validate();
  return c;
}

void archive_config(const RunConfig& cfg, const fs::path& dir) {
  write_text(dir / "config.json", config_to_json(cfg).dump(2) + "\n");
}

GripGrid make_grid(const RunConfig& c) {
  if (c.grid.mode == "cartesian") return GripGrid::cartesian(c.grid.ys, c.grid.zs, c.grid.thetas, c.grid.grip_forces);
  return GripGrid::sampled(c.grid.per_class, c.grid.y_half_range, c.grid.z_half_range, c.grid.theta_half_range,
                           c.seed);
}

struct Prepared {
  TensorDataset train;
  TensorDataset validation;
  SplitFile split;
};

Prepared prepare(const RunConfig& cfg, const fs::path& ds_dir) {
  const auto loaded = load_dataset(ds_dir);
  if (loaded.manifest.image_height != cfg.model.height || loaded.manifest.image_width != cfg.model.width) {
    throw ShapeError("dataset images are " + std::to_string(loaded.manifest.image_width) + "x" +
                     std::to_string(loaded.manifest.image_height) + " but the model expects " +
                     std::to_string(cfg.model.width) + "x" + std::to_string(cfg.model.height));
  }
  const auto s = split_train_validation(loaded.points, cfg.dataset.held_out_classes);
  const auto all = to_tensor_dataset(loaded.points);
  Prepared p;
  p.train = subset(all, s.train);
  p.validation = subset(all, s.validation);
  p.split.held_out_classes = cfg.dataset.held_out_classes;
  p.split.train_ids = p.train.ids;
  p.split.validation_ids = p.validation.ids;
  p.split.n_folds = cfg.dataset.n_folds;
  p.split.fold_seed = cfg.seed;
  p.split.fold_of_train = make_folds(p.train.size(), cfg.dataset.n_folds, cfg.seed).assignment;
  return p;
}

void write_predictions(const fs::path& path, const Evaluation& ev) {
  std::string text;
  for (std::size_t i = 0; i < ev.labels.size(); ++i) {
    ordered_json j;
    j["point_id"] = ev.ids[i];
    j["class"] = ev.classes[i];
    j["label"] = ev.labels[i];
    j["prediction"] = ev.predictions[i];
    text += j.dump() + "\n";
  }
  write_text(path, text);
}

}  // namespace

std::vector<std::string> RunConfig::violations() const {
  std::vector<std::string> v;
  auto add = [&](const std::string& where, const std::function<void()>& check) {
    try {
      check();
    } catch (const Error& e) {
      v.push_back(where + ": " + e.what());
    }
  };
  if (classes.empty()) v.emplace_back("pullsim: no object classes");
  std::set<std::string> ids;
  for (const auto& c : classes) {
    if (!ids.insert(c.class_id).second) v.push_back("pullsim: duplicate class '" + c.class_id + "'");
    add("pullsim", [&] { validate_object(c, simulator); });
  }
  add("pullsim", [&] { simulator.validate(); });
  add("pullsim", [&] { profile.validate(); });
  if (grid.mode == "sampled") {
    if (grid.per_class < 1) v.emplace_back("pullsim.grid: per_class must be >= 1");
    if (grid.y_half_range < 0 || grid.z_half_range < 0 || grid.theta_half_range < 0)
      v.emplace_back("pullsim.grid: half ranges must be >= 0");
  } else if (grid.mode == "cartesian") {
    if (grid.ys.empty() || grid.zs.empty() || grid.thetas.empty() || grid.grip_forces.empty())
      v.emplace_back("pullsim.grid: cartesian grid needs y, z, theta and grip_force values");
    for (double f : grid.grip_forces) add("pullsim.grid", [&] { GripConfiguration{"grid", 0, 0, 0, f}.validate(); });
    for (double t : grid.thetas) add("pullsim.grid", [&] { GripConfiguration{"grid", 0, 0, t, 20}.validate(); });
  } else {
    v.push_back("pullsim.grid: unknown mode '" + grid.mode + "'");
  }
  add("labeling", [&] { labeling.validate(); });
  if (dataset.path.empty()) v.emplace_back("dataset: empty path");
  if (dataset.n_folds < 2) v.emplace_back("dataset: n_folds must be >= 2");
  if (model.kind != "snn" && model.kind != "baseline" && model.kind != "resnet18")
    v.push_back("model: unknown kind '" + model.kind + "'");
  if (model.height < 32 || model.width < 32) v.emplace_back("model: input must be at least 32x32");
  for (const auto& s : training.violations()) v.push_back("training: " + s);
  if (train_mode != "cross_validation" && train_mode != "single")
    v.push_back("training: unknown mode '" + train_mode + "'");
  const std::set<std::string> subsets{"validation", "train", "all", "folds"};
  if (!subsets.count(evaluation.subset)) v.push_back("evaluation: unknown subset '" + evaluation.subset + "'");
  return v;
}

void RunConfig::validate() const {
  const auto v = violations();
  if (v.empty()) return;
  std::string msg = "invalid configuration";
  for (const auto& s : v) msg += "\n  " + s;
  throw ValidationError(msg);
}

RunConfig default_config() {
  RunConfig c;
  const char* root = std::getenv(kDataRootEnv);
  c.data_root = (root && *root) ? fs::path(root) : fs::path("data");
  c.classes = default_object_classes();
  c.simulator.image_width = c.model.width;
  c.simulator.image_height = c.model.height;
  return c;
}

RunConfig config_from_json(const json& j, RunConfig c) {
  try {
    check_keys(j, "root", {"seed", "data_root", "pullsim", "labeling", "dataset", "model", "training", "evaluation"});
    read(j, "seed", c.seed);
    if (j.contains("data_root")) c.data_root = j.at("data_root").get<std::string>();

    if (j.contains("pullsim")) {
      const auto& p = j.at("pullsim");
      check_keys(p, "pullsim", {"classes", "grid", "profile", "simulator"});
      if (p.contains("classes")) {
        c.classes.clear();
        for (const auto& e : p.at("classes")) c.classes.push_back(parse_class(e));
      }
      if (p.contains("grid")) {
        const auto& g = p.at("grid");
        check_keys(g, "pullsim.grid",
                   {"mode", "per_class", "y_half_range", "z_half_range", "theta_half_range", "y", "z", "theta",
                    "grip_force"});
        read(g, "mode", c.grid.mode);
        read(g, "per_class", c.grid.per_class);
        read(g, "y_half_range", c.grid.y_half_range);
        read(g, "z_half_range", c.grid.z_half_range);
        read(g, "theta_half_range", c.grid.theta_half_range);
        read(g, "y", c.grid.ys);
        read(g, "z", c.grid.zs);
        read(g, "theta", c.grid.thetas);
        read(g, "grip_force", c.grid.grip_forces);
      }
      if (p.contains("profile")) {
        const auto& f = p.at("profile");
        check_keys(f, "pullsim.profile", {"f0", "delta_f", "delta_t", "max_steps"});
        read(f, "f0", c.profile.f0);
        read(f, "delta_f", c.profile.delta_f);
        read(f, "delta_t", c.profile.delta_t);
        read(f, "max_steps", c.profile.max_steps);
      }
      if (p.contains("simulator")) {
        const auto& s = p.at("simulator");
        check_keys(s, "pullsim.simulator",
                   {"force_noise_std", "lag_time", "pixel_noise_std", "gravity_sag", "sample_rate", "image_width",
                    "image_height", "gel_width", "gel_height"});
        read(s, "force_noise_std", c.simulator.force_noise_std);
        read(s, "lag_time", c.simulator.lag_time);
        read(s, "pixel_noise_std", c.simulator.pixel_noise_std);
        read(s, "gravity_sag", c.simulator.gravity_sag);
        read(s, "sample_rate", c.simulator.sample_rate);
        read(s, "image_width", c.simulator.image_width);
        read(s, "image_height", c.simulator.image_height);
        read(s, "gel_width", c.simulator.gel_width);
        read(s, "gel_height", c.simulator.gel_height);
      }
    }
    if (j.contains("labeling")) {
      const auto& l = j.at("labeling");
      check_keys(l, "labeling", {"f_min", "f_max", "epsilon", "delta_z"});
      read(l, "f_min", c.labeling.f_min);
      read(l, "f_max", c.labeling.f_max);
      read(l, "epsilon", c.labeling.epsilon);
      read(l, "delta_z", c.labeling.delta_z);
    }
    if (j.contains("dataset")) {
      const auto& d = j.at("dataset");
      check_keys(d, "dataset", {"path", "name", "held_out_classes", "n_folds"});
      read(d, "path", c.dataset.path);
      read(d, "name", c.dataset.name);
      read(d, "held_out_classes", c.dataset.held_out_classes);
      read(d, "n_folds", c.dataset.n_folds);
    }
    bool model_size_given = false;
    if (j.contains("model")) {
      const auto& m = j.at("model");
      check_keys(m, "model", {"kind", "height", "width"});
      read(m, "kind", c.model.kind);
      model_size_given = m.contains("height") || m.contains("width");
      read(m, "height", c.model.height);
      read(m, "width", c.model.width);
    }
    // The rendered resolution follows the model unless set explicitly.
    const bool sim_size_given = j.contains("pullsim") && j.at("pullsim").contains("simulator") &&
                                (j.at("pullsim").at("simulator").contains("image_width") ||
                                 j.at("pullsim").at("simulator").contains("image_height"));
    if (model_size_given && !sim_size_given) {
      c.simulator.image_width = c.model.width;
      c.simulator.image_height = c.model.height;
    }
    if (j.contains("training")) {
      const auto& t = j.at("training");
      check_keys(t, "training",
                 {"learning_rate", "momentum", "sam_radius", "batch_size", "max_epochs", "max_steps", "eval_every",
                  "patience", "target_train_mse", "mode", "run_dir"});
      read(t, "learning_rate", c.training.learning_rate);
      read(t, "momentum", c.training.momentum);
      read(t, "sam_radius", c.training.sam_radius);
      read(t, "batch_size", c.training.batch_size);
      read(t, "max_epochs", c.training.max_epochs);
      read(t, "max_steps", c.training.max_steps);
      read(t, "eval_every", c.training.eval_every);
      read(t, "patience", c.training.patience);
      read(t, "target_train_mse", c.training.target_train_mse);
      read(t, "mode", c.train_mode);
      read(t, "run_dir", c.run_dir);
    }
    if (j.contains("evaluation")) {
      const auto& e = j.at("evaluation");
      check_keys(e, "evaluation", {"checkpoint", "subset", "out"});
      read(e, "checkpoint", c.evaluation.checkpoint);
      read(e, "subset", c.evaluation.subset);
      read(e, "out", c.evaluation.out);
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed configuration: ") + e.what());
  }
  return c;
}

ordered_json config_to_json(const RunConfig& c) {
  ordered_json j;
  j["seed"] = c.seed;
  j["data_root"] = c.data_root.string();
  ordered_json p;
  p["classes"] = ordered_json::array();
  for (const auto& k : c.classes) p["classes"].push_back(class_to_json(k));
  ordered_json g;
  g["mode"] = c.grid.mode;
  if (c.grid.mode == "cartesian") {
    g["y"] = c.grid.ys;
    g["z"] = c.grid.zs;
    g["theta"] = c.grid.thetas;
    g["grip_force"] = c.grid.grip_forces;
  } else {
    g["per_class"] = c.grid.per_class;
    g["y_half_range"] = c.grid.y_half_range;
    g["z_half_range"] = c.grid.z_half_range;
    g["theta_half_range"] = c.grid.theta_half_range;
  }
  p["grid"] = g;
  p["profile"] = {{"f0", c.profile.f0},
                  {"delta_f", c.profile.delta_f},
                  {"delta_t", c.profile.delta_t},
                  {"max_steps", c.profile.max_steps}};
  p["simulator"] = {{"force_noise_std", c.simulator.force_noise_std},
                    {"lag_time", c.simulator.lag_time},
                    {"pixel_noise_std", c.simulator.pixel_noise_std},
                    {"gravity_sag", c.simulator.gravity_sag},
                    {"sample_rate", c.simulator.sample_rate},
                    {"image_width", c.simulator.image_width},
                    {"image_height", c.simulator.image_height},
                    {"gel_width", c.simulator.gel_width},
                    {"gel_height", c.simulator.gel_height}};
  j["pullsim"] = p;
  j["labeling"] = {{"f_min", c.labeling.f_min},
                   {"f_max", c.labeling.f_max},
                   {"epsilon", c.labeling.epsilon},
                   {"delta_z", c.labeling.delta_z}};
  j["dataset"] = {{"path", c.dataset.path},
                  {"name", c.dataset.name},
                  {"held_out_classes", c.dataset.held_out_classes},
                  {"n_folds", c.dataset.n_folds}};
  j["model"] = {{"kind", c.model.kind}, {"height", c.model.height}, {"width", c.model.width}};
  j["training"] = {{"learning_rate", c.training.learning_rate},
                   {"momentum", c.training.momentum},
                   {"sam_radius", c.training.sam_radius},
                   {"batch_size", c.training.batch_size},
                   {"max_epochs", c.training.max_epochs},
                   {"max_steps", c.training.max_steps},
                   {"eval_every", c.training.eval_every},
                   {"patience", c.training.patience},
                   {"target_train_mse", c.training.target_train_mse},
                   {"mode", c.train_mode},
                   {"run_dir", c.run_dir}};
  j["evaluation"] = {
      {"checkpoint", c.evaluation.checkpoint}, {"subset", c.evaluation.subset}, {"out", c.evaluation.out}};
  return j;
}

RunConfig load_config(const fs::path& path) {
  const auto text = read_text(path);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ValidationError("config '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

fs::path dataset_dir(const Invocation& inv) {
  return resolve(inv.config.data_root, inv.config.dataset.path);
}

fs::path run_dir(const Invocation& inv) { return resolve(inv.config.data_root, inv.config.run_dir); }

void cmd_simulate(const Invocation& inv, std::ostream& out) {
  const RunConfig cfg = effective(inv);
  const fs::path dir = inv.overrides.out ? *inv.overrides.out : dataset_dir(inv);
  const auto ds = generate_dataset(cfg.classes, make_grid(cfg), cfg.profile, cfg.simulator, cfg.labeling);
  const auto m = save_dataset(ds.points, dir, {cfg.dataset.name, cfg.labeling, cfg.seed}, ds.traces);
  archive_config(cfg, dir);
  std::size_t clamped = 0;
  for (const auto& p : ds.points) clamped += p.clamped;
  out << "dataset '" << m.name << "' at " << dir.string() << "\n"
      << "  points: " << m.points.size() << " (" << clamped << " clamped)\n"
      << "  classes: " << m.object_classes.size() << "\n"
      << "  images: " << m.image_width << "x" << m.image_height << "\n"
      << "  seed: " << m.creation_seed << "\n";
}

void cmd_label(const Invocation& inv, std::ostream& out) {
  const RunConfig cfg = effective(inv);
  const fs::path dir = inv.overrides.out ? *inv.overrides.out : dataset_dir(inv);
  if (!has_traces(dir)) throw IoError("dataset '" + dir.string() + "' has no stored traces to label");
  auto loaded = load_dataset(dir);
  const auto traces = load_traces(dir);
  std::size_t changed = 0, clamped = 0;
  for (std::size_t i = 0; i < traces.size(); ++i) {
    auto& p = loaded.points[i];
    TraceLabel lab;
    try {
      lab = label_trace(traces[i], cfg.labeling);
    } catch (const Error& e) {
      throw LabelingError("point '" + p.point_id + "': " + e.what());
    }
    if (lab.label != p.label) ++changed;
    p.label = lab.label;
    p.raw_force = lab.raw_force;
    p.clamped = lab.clamped;
    clamped += lab.clamped;
  }
  rewrite_records(loaded.points, dir, cfg.labeling);
  out << "relabelled " << loaded.points.size() << " points in " << dir.string() << " (" << changed << " changed, "
      << clamped << " clamped)\n";
}

void cmd_split(const Invocation& inv, std::ostream& out) {
  const RunConfig cfg = effective(inv);
  const fs::path dir = inv.overrides.out ? *inv.overrides.out : dataset_dir(inv);
  const auto p = prepare(cfg, dir);
  save_split(p.split, dir / "split.json");
  out << "split written to " << (dir / "split.json").string() << "\n"
      << "  train: " << p.split.train_ids.size() << " points, " << p.split.n_folds << " folds\n"
      << "  validation: " << p.split.validation_ids.size() << " points\n";
}

void cmd_train(const Invocation& inv, std::ostream& out) {
  const RunConfig cfg = effective(inv);
  const fs::path dir = inv.overrides.out ? *inv.overrides.out : run_dir(inv);
  if (inv.overrides.resume && fs::exists(dir / "done")) {
    out << "run " << dir.string() << " is already complete\n";
    return;
  }
  const auto p = prepare(cfg, dataset_dir(inv));
  make_dirs(dir);
  archive_config(cfg, dir);
  save_split(p.split, dir / "split.json");
  const auto builder = [&] { return build_model(cfg.model.kind, cfg.model.height, cfg.model.width); };

  if (cfg.train_mode == "single") {
    std::ofstream records(dir / "records", std::ios::trunc);
    if (!records) throw IoError("cannot write '" + (dir / "records").string() + "'");
    TrainOptions o;
    o.on_record = [&](const TrainRecord& r) {
      records << format_train_record(r) << "\n" << std::flush;
      out << "step " << r.step << " train_loss " << r.train_loss << " val_loss " << r.val_loss << "\n";
    };
    const auto res = train_single(builder(), p.train, p.validation, cfg.training, o);
    save_checkpoint(res.best, dir / "checkpoint");
    save_checkpoint(res.last, dir / "checkpoint_last");
    out << "trained " << res.steps << " steps; best val_loss at step " << res.best.step << "\n";
  } else {
    FoldAssignment folds{cfg.dataset.n_folds, p.split.fold_of_train};
    CrossValidationOptions o;
    o.labeling = cfg.labeling;
    o.run_dir = dir;
    o.resume = inv.overrides.resume;
    const auto cv = cross_validate(builder, p.train, folds, cfg.training, o);
    write_text(dir / "pooled_report.json", report_to_json(cv.pooled) + "\n");
    for (const auto& f : cv.folds) {
      out << "fold " << f.fold << ": n " << f.report.n << " F_A " << f.report.f_accuracy << " N, F_P "
          << f.report.f_precision << " N\n";
    }
    out << "pooled: n " << cv.pooled.n << " F_A " << cv.pooled.f_accuracy << " N, F_P " << cv.pooled.f_precision
        << " N\n";
  }
  write_text(dir / "done", "");
}

void cmd_evaluate(const Invocation& inv, std::ostream& out) {
  const RunConfig cfg = effective(inv);
  const fs::path rdir = run_dir(inv);
  const fs::path odir = inv.overrides.out ? *inv.overrides.out : resolve(rdir, cfg.evaluation.out);
  const auto loaded = load_dataset(dataset_dir(inv));
  const auto all = to_tensor_dataset(loaded.points);

  Evaluation ev;
  if (cfg.evaluation.subset == "folds") {
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < all.size(); ++i) index[all.ids[i]] = i;
    for (int k = 0;; ++k) {
      const fs::path f = rdir / ("fold_" + std::to_string(k)) / "predictions.ndrec";
      if (!fs::exists(f)) {
        if (k == 0) throw IoError("run '" + rdir.string() + "' has no fold predictions");
        break;
      }
      std::ifstream in(f);
      std::string line;
      while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto j = json::parse(line);
        const auto id = j.at("point_id").get<std::string>();
        const auto it = index.find(id);
        if (it == index.end()) throw IoError("fold prediction for unknown point '" + id + "'");
        ev.ids.push_back(id);
        ev.classes.push_back(all.classes[it->second]);
        ev.labels.push_back(all.labels[it->second]);
        ev.predictions.push_back(j.at("prediction").get<double>());
      }
    }
    ev.report = evaluate_predictions(ev.labels, ev.predictions, ev.classes, cfg.labeling);
  } else {
    const fs::path ckpt_path =
        cfg.evaluation.checkpoint.empty() ? rdir / "checkpoint" : resolve(cfg.data_root, cfg.evaluation.checkpoint);
    const Checkpoint ckpt = load_checkpoint(ckpt_path);
    TensorDataset data;
    if (cfg.evaluation.subset == "all") {
      data = all;
    } else {
      const auto s = split_train_validation(loaded.points, cfg.dataset.held_out_classes);
      data = subset(all, cfg.evaluation.subset == "train" ? s.train : s.validation);
    }
    ev = evaluate_model(ckpt, data, cfg.labeling);
  }

  make_dirs(odir);
  write_text(odir / "report.json", report_to_json(ev.report) + "\n");
  const auto table = format_report_table({{cfg.model.kind, ev.report}});
  write_text(odir / "report.txt", table);
  write_predictions(odir / "predictions.ndrec", ev);
  emit_plots(ev.report, residuals(ev.labels, ev.predictions), ev.predictions, ev.labels, odir);
  out << table;
}

void cmd_report(const Invocation& inv, std::ostream& out) {
  if (inv.report_inputs.empty()) throw ValidationError("report: no inputs (expected name=path entries)");
  std::vector<std::pair<std::string, EvaluationReport>> rows;
  for (const auto& entry : inv.report_inputs) {
    const auto eq = entry.find('=');
    const std::string name = eq == std::string::npos ? fs::path(entry).stem().string() : entry.substr(0, eq);
    fs::path path = eq == std::string::npos ? fs::path(entry) : fs::path(entry.substr(eq + 1));
    if (fs::is_directory(path)) path /= "report.json";
    rows.emplace_back(name, report_from_json(read_text(path)));
  }
  const auto table = format_report_table(rows);
  if (inv.overrides.out) {
    const fs::path target = *inv.overrides.out;
    if (target.has_parent_path()) make_dirs(target.parent_path());
    write_text(target, table);
  }
  out << table;
}

int run(const std::string& command, const Invocation& inv, std::ostream& out, std::ostream& err) {
  static const std::map<std::string, void (*)(const Invocation&, std::ostream&)> commands{
      {"simulate", cmd_simulate}, {"label", cmd_label},       {"split", cmd_split},
      {"train", cmd_train},       {"evaluate", cmd_evaluate}, {"report", cmd_report}};
  const auto it = commands.find(command);
  if (it == commands.end()) {
    err << "error: unknown command '" << command << "'\n";
    return 2;
  }
  try {
    it->second(inv, out);
    return 0;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace gripstab::app
