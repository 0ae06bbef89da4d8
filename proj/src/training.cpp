#include "gripstab/training.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "gripstab/rng.hpp"

namespace gripstab {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

std::vector<std::string> TrainConfig::violations() const {
  std::vector<std::string> v;
  if (!(learning_rate > 0.0)) v.emplace_back("learning_rate must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) v.emplace_back("momentum must lie in [0,1)");
  if (!(sam_radius >= 0.0)) v.emplace_back("sam_radius must be >= 0");
  if (batch_size < 1) v.emplace_back("batch_size must be >= 1");
  if (max_epochs < 1) v.emplace_back("max_epochs must be >= 1");
  if (eval_every < 1) v.emplace_back("eval_every must be >= 1");
  if (patience < 0) v.emplace_back("patience must be >= 0");
  if (!(target_train_mse >= 0.0)) v.emplace_back("target_train_mse must be >= 0");
  return v;
}

void TrainConfig::validate() const {
  const auto v = violations();
  if (!v.empty()) throw ValidationError("invalid training config: " + v.front());
}

bool TrainRecord::same_values(const TrainRecord& o) const {
  auto eq = [](double a, double b) { return (std::isnan(a) && std::isnan(b)) || a == b; };
  return step == o.step && epoch == o.epoch && eq(train_loss, o.train_loss) && eq(val_loss, o.val_loss) &&
         eq(train_eval_loss, o.train_eval_loss);
}

std::string format_train_record(const TrainRecord& r) {
  ordered_json j;
  j["step"] = r.step;
  j["epoch"] = r.epoch;
  j["train_loss"] = r.train_loss;
  j["val_loss"] = r.val_loss;
  j["train_eval_loss"] = std::isnan(r.train_eval_loss) ? ordered_json(nullptr) : ordered_json(r.train_eval_loss);
  j["wall_time"] = r.wall_time;
  return j.dump();
}

TrainRecord parse_train_record(const std::string& line) {
  try {
    const auto j = json::parse(line);
    TrainRecord r;
    r.step = j.at("step").get<std::uint64_t>();
    r.epoch = j.at("epoch").get<int>();
    r.train_loss = j.at("train_loss").get<double>();
    r.val_loss = j.at("val_loss").get<double>();
    r.train_eval_loss = j.at("train_eval_loss").is_null() ? std::nan("") : j.at("train_eval_loss").get<double>();
    r.wall_time = j.at("wall_time").get<double>();
    return r;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed training record: ") + e.what());
  }
}

std::vector<TrainRecord> read_train_records(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open records '" + path.string() + "'");
  std::vector<TrainRecord> out;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) out.push_back(parse_train_record(line));
  return out;
}

double mse_loss(std::span<const double> predictions, std::span<const double> labels) {
  if (predictions.size() != labels.size()) {
    throw ValidationError("mse_loss: " + std::to_string(predictions.size()) + " predictions for " +
                          std::to_string(labels.size()) + " labels");
  }
  if (predictions.empty()) throw ValidationError("mse_loss of an empty batch");
  double s = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) s += (predictions[i] - labels[i]) * (predictions[i] - labels[i]);
  return s / static_cast<double>(labels.size());
}

TrainResult train_single(const ModelSpec& model, const TensorDataset& train, const TensorDataset& val,
                         const TrainConfig& cfg, const TrainOptions& opts) {
  cfg.validate();
  if (train.size() == 0) throw ValidationError("training set is empty");
  if (train.height != model.height || train.width != model.width) {
    throw ShapeError("training images are " + std::to_string(train.width) + "x" + std::to_string(train.height) +
                     ", model expects " + std::to_string(model.width) + "x" + std::to_string(model.height));
  }
  const auto t0 = std::chrono::steady_clock::now();
  Network<float> net(model);
  net.initialize(cfg.seed);
  std::vector<float> velocity;

  TrainResult result;
  double best_val = std::numeric_limits<double>::infinity();
  int since_best = 0;
  double loss_sum = 0.0;
  std::size_t loss_count = 0;
  std::uint64_t step = 0;
  int epoch = 0;
  bool stop = false;

  Tensor<float> left, right;
  std::vector<double> labels, preds;
  std::vector<float> dout;
  std::vector<std::size_t> order(train.size());

  auto rng_state = [&] {
    return "seed=" + std::to_string(cfg.seed) + " epoch=" + std::to_string(epoch) + " step=" + std::to_string(step);
  };

  auto record = [&] {
    TrainRecord r;
    r.step = step;
    r.epoch = epoch;
    r.train_loss = loss_count ? loss_sum / static_cast<double>(loss_count) : 0.0;
    loss_sum = 0.0;
    loss_count = 0;
    const bool measure_train = cfg.target_train_mse > 0.0 || val.size() == 0;
    if (measure_train) r.train_eval_loss = mse_loss(predict(net, train), train.labels);
    r.val_loss = val.size() ? mse_loss(predict(net, val), val.labels) : r.train_eval_loss;
    r.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!std::isfinite(r.train_loss) || !std::isfinite(r.val_loss)) {
      result.records.push_back(r);
      throw DivergenceError("loss diverged at step " + std::to_string(step), result.records);
    }
    result.records.push_back(r);
    if (opts.on_record) opts.on_record(r);
    if (r.val_loss < best_val) {
      best_val = r.val_loss;
      since_best = 0;
      result.best = snapshot(net, step, rng_state());
    } else if (cfg.patience > 0 && ++since_best >= cfg.patience) {
      result.early_stopped = true;
      stop = true;
    }
    if (cfg.target_train_mse > 0.0 && r.train_eval_loss < cfg.target_train_mse) {
      result.reached_target = true;
      stop = true;
    }
    if (!stop && opts.stop_after && opts.stop_after(r)) {
      result.interrupted = true;
      stop = true;
    }
  };

  for (epoch = 0; epoch < cfg.max_epochs && !stop; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng(derive_seed(cfg.seed, {tag(Stream::kShuffle), static_cast<std::uint64_t>(epoch)}));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    for (std::size_t start = 0; start < order.size() && !stop; start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const std::span<const std::size_t> idx(order.data() + start, end - start);
      make_batch(train, idx, left, right);
      labels.clear();
      for (auto i : idx) labels.push_back(train.labels[i]);
      const Tensor<float>* in[2] = {&left, &right};
      const std::uint64_t dropout_seed = derive_seed(cfg.seed, {tag(Stream::kDropout), step});
      int pass = 0;

      auto gradient_fn = [&](std::span<const float>, std::span<float> grad) {
        ForwardOptions fo{Mode::kTrain, dropout_seed, pass++ == 0};
        const auto y = net.forward(in, fo);
        preds.assign(y.begin(), y.end());
        const double loss = mse_loss(preds, labels);
        dout.resize(y.size());
        for (std::size_t k = 0; k < y.size(); ++k)
          dout[k] = static_cast<float>(2.0 * (preds[k] - labels[k]) / static_cast<double>(y.size()));
        net.backward(dout);
        std::copy(net.gradients().begin(), net.gradients().end(), grad.begin());
        return loss;
      };

      try {
        const auto info = sam_step<float>(net.parameters(), gradient_fn, cfg, velocity);
        loss_sum += info.loss;
        ++loss_count;
      } catch (const TrainingError& e) {
        throw DivergenceError(std::string(e.what()) + " at step " + std::to_string(step + 1), result.records);
      }
      ++step;
      if (step % static_cast<std::uint64_t>(cfg.eval_every) == 0) record();
      if (cfg.max_steps && step >= cfg.max_steps) stop = true;
    }
  }
  if (epoch > 0) --epoch;
  if (result.records.empty() || result.records.back().step != step) record();
  result.steps = step;
  result.last = snapshot(net, step, rng_state());
  return result;
}

namespace {

void write_lines(const fs::path& path, const std::vector<std::string>& lines) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  for (const auto& l : lines) out << l << "\n";
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

bool fold_complete(const fs::path& dir) {
  return fs::exists(dir / "checkpoint") && fs::exists(dir / "records") && fs::exists(dir / "report.json") &&
         fs::exists(dir / "predictions.ndrec");
}

}  // namespace

CrossValidationResult cross_validate(const std::function<ModelSpec()>& model_builder, const TensorDataset& data,
                                     const FoldAssignment& folds, const TrainConfig& cfg,
                                     const CrossValidationOptions& opts) {
  if (folds.assignment.size() != data.size()) {
    throw ValidationError("fold assignment covers " + std::to_string(folds.assignment.size()) +
                          " points but the dataset has " + std::to_string(data.size()));
  }
  if (folds.n_folds < 2) throw ValidationError("cross-validation needs at least two folds");
  const ModelSpec model = model_builder();

  CrossValidationResult out;
  std::vector<double> pooled_pred(data.size(), std::nan(""));
  std::vector<bool> seen(data.size(), false);

  for (int k = 0; k < folds.n_folds; ++k) {
    FoldResult fr;
    fr.fold = k;
    fr.indices = folds.members(k);
    if (fr.indices.empty()) throw ValidationError("fold " + std::to_string(k) + " is empty");
    const auto train_idx = folds.complement(k);
    const TensorDataset held = subset(data, fr.indices);
    for (auto i : fr.indices) fr.point_ids.push_back(data.ids[i]);

    const fs::path dir = opts.run_dir.empty() ? fs::path() : opts.run_dir / ("fold_" + std::to_string(k));
    if (!dir.empty() && opts.resume && fold_complete(dir)) {
      fr.checkpoint = load_checkpoint(dir / "checkpoint");
      fr.records = read_train_records(dir / "records");
      std::ifstream in(dir / "predictions.ndrec");
      std::string line;
      while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto j = json::parse(line);
        fr.predictions.push_back(j.at("prediction").get<double>());
      }
      if (fr.predictions.size() != fr.indices.size()) {
        throw IoError("fold " + std::to_string(k) + " predictions in '" + dir.string() + "' do not match the folds");
      }
      fr.report = report_from_json(read_text(dir / "report.json"));
    } else {
      TrainConfig fold_cfg = cfg;
      fold_cfg.seed = derive_seed(cfg.seed, {tag(Stream::kFolds), static_cast<std::uint64_t>(k)});
      TrainOptions topts;
      std::ofstream records_out;
      if (!dir.empty()) {
        std::error_code ec;
        fs::create_directories(dir, ec);
        if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());
        records_out.open(dir / "records", std::ios::trunc);
        if (!records_out) throw IoError("cannot write '" + (dir / "records").string() + "'");
        topts.on_record = [&](const TrainRecord& r) { records_out << format_train_record(r) << "\n" << std::flush; };
      }
      TrainResult tr;
      try {
        tr = train_single(model, subset(data, train_idx), held, fold_cfg, topts);
      } catch (const DivergenceError& e) {
        throw DivergenceError("fold " + std::to_string(k) + ": " + e.what(), e.records());
      } catch (const TrainingError& e) {
        throw TrainingError("fold " + std::to_string(k) + ": " + e.what());
      } catch (const ValidationError& e) {
        throw ValidationError("fold " + std::to_string(k) + ": " + e.what());
      } catch (const ShapeError& e) {
        throw ShapeError("fold " + std::to_string(k) + ": " + e.what());
      }
      fr.checkpoint = std::move(tr.best);
      fr.records = std::move(tr.records);
      const Evaluation ev = evaluate_model(fr.checkpoint, held, opts.labeling);
      fr.predictions = ev.predictions;
      fr.report = ev.report;
      if (!dir.empty()) {
        save_checkpoint(fr.checkpoint, dir / "checkpoint");
        std::vector<std::string> lines;
        for (std::size_t j = 0; j < fr.indices.size(); ++j) {
          ordered_json p;
          p["point_id"] = fr.point_ids[j];
          p["label"] = held.labels[j];
          p["prediction"] = fr.predictions[j];
          lines.push_back(p.dump());
        }
        write_lines(dir / "predictions.ndrec", lines);
        write_lines(dir / "report.json", {report_to_json(fr.report)});
      }
    }
    for (std::size_t j = 0; j < fr.indices.size(); ++j) {
      const auto i = fr.indices[j];
      if (seen[i]) throw ValidationError("point " + data.ids[i] + " is validated in more than one fold");
      seen[i] = true;
      pooled_pred[i] = fr.predictions[j];
    }
    out.folds.push_back(std::move(fr));
  }

  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!seen[i]) throw ValidationError("point " + data.ids[i] + " is not validated by any fold");
  }
  out.pooled_ids = data.ids;
  out.pooled_labels = data.labels;
  out.pooled_predictions = pooled_pred;
  out.pooled = evaluate_predictions(out.pooled_labels, out.pooled_predictions, data.classes, opts.labeling);
  return out;
}

}  // namespace gripstab
