#include "gripstab/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include <json.hpp>

namespace gripstab {

namespace {

void check_lengths(std::span<const double> labels, std::span<const double> predictions) {
  if (labels.size() != predictions.size()) {
    throw ValidationError("labels and predictions differ in length (" + std::to_string(labels.size()) + " vs " +
                          std::to_string(predictions.size()) + ")");
  }
  if (labels.empty()) throw ValidationError("metrics need at least one sample");
}

double mean(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double sample_std(std::span<const double> v, double mu) {
  double ss = 0.0;
  for (double x : v) ss += (x - mu) * (x - mu);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else out += c;
  }
  return out;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

ClassMetrics metrics(std::span<const double> labels, std::span<const double> predictions, const LabelingConfig& cfg) {
  ClassMetrics m;
  m.n = labels.size();
  m.a_mean = accuracy_mean(labels, predictions);
  m.p_rmse = labels.size() >= 2 ? precision_rmse(labels, predictions) : 0.0;
  const auto f = to_force_units(m.a_mean, m.p_rmse, cfg);
  m.f_accuracy = f.f_accuracy;
  m.f_precision = f.f_precision;
  return m;
}

}  // namespace

double accuracy_mean(std::span<const double> labels, std::span<const double> predictions) {
  check_lengths(labels, predictions);
  double s = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) s += labels[i] - predictions[i];
  return s / static_cast<double>(labels.size());
}

double precision_rmse(std::span<const double> labels, std::span<const double> predictions) {
  check_lengths(labels, predictions);
  if (labels.size() < 2) throw ValidationError("precision needs at least two samples");
  const double a = accuracy_mean(labels, predictions);
  double ss = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double d = (labels[i] - predictions[i]) - a;
    ss += d * d;
  }
  return std::sqrt(ss / static_cast<double>(labels.size() - 1));
}

ForceUnits to_force_units(double a_mean, double p_rmse, const LabelingConfig& cfg) {
  cfg.validate();
  const double span = cfg.f_max - cfg.f_min;
  return {a_mean * span, p_rmse * span};
}

GaussianFit fit_residual_gaussian(std::span<const double> residuals) {
  if (residuals.size() < 2) throw ValidationError("a Gaussian fit needs at least two residuals");
  const double mu = mean(residuals);
  return {mu, sample_std(residuals, mu)};
}

std::vector<double> residuals(std::span<const double> labels, std::span<const double> predictions) {
  check_lengths(labels, predictions);
  std::vector<double> r(labels.size());
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = labels[i] - predictions[i];
  return r;
}

EvaluationReport evaluate_predictions(std::span<const double> labels, std::span<const double> predictions,
                                      std::span<const std::string> classes, const LabelingConfig& cfg) {
  check_lengths(labels, predictions);
  if (classes.size() != labels.size()) throw ValidationError("class list does not match the number of samples");
  const ClassMetrics all = metrics(labels, predictions, cfg);
  EvaluationReport r;
  r.n = all.n;
  r.a_mean = all.a_mean;
  r.p_rmse = all.p_rmse;
  r.f_accuracy = all.f_accuracy;
  r.f_precision = all.f_precision;
  const auto res = residuals(labels, predictions);
  r.gaussian_fit = res.size() >= 2 ? fit_residual_gaussian(res) : GaussianFit{res.front(), 0.0};

  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> groups;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto& g = groups[classes[i]];
    g.first.push_back(labels[i]);
    g.second.push_back(predictions[i]);
  }
  for (const auto& [cls, g] : groups) r.per_class[cls] = metrics(g.first, g.second, cfg);
  return r;
}

Evaluation evaluate_network(Network<float>& net, const TensorDataset& data, const LabelingConfig& cfg) {
  if (data.size() == 0) throw ValidationError("cannot evaluate on an empty dataset");
  if (data.height != net.spec().height || data.width != net.spec().width) {
    throw ShapeError("dataset images are " + std::to_string(data.width) + "x" + std::to_string(data.height) +
                     " but the model expects " + std::to_string(net.spec().width) + "x" +
                     std::to_string(net.spec().height));
  }
  Evaluation e;
  e.predictions = predict(net, data);
  e.labels = data.labels;
  e.ids = data.ids;
  e.classes = data.classes;
  e.report = evaluate_predictions(e.labels, e.predictions, e.classes, cfg);
  return e;
}

Evaluation evaluate_model(const Checkpoint& ckpt, const TensorDataset& data, const LabelingConfig& cfg) {
  Network<float> net = restore(ckpt);
  return evaluate_network(net, data, cfg);
}

Histogram residual_histogram(std::span<const double> residuals, int bins) {
  if (bins < 1) throw ValidationError("histogram needs at least one bin");
  if (residuals.empty()) throw ValidationError("histogram of no residuals");
  Histogram h;
  const auto [mn, mx] = std::minmax_element(residuals.begin(), residuals.end());
  h.lo = *mn;
  h.hi = *mx;
  if (h.hi - h.lo < 1e-12) {
    h.lo -= 0.5e-3;
    h.hi += 0.5e-3;
  }
  h.counts.assign(bins, 0);
  const double w = h.bin_width();
  for (double r : residuals) {
    int b = static_cast<int>((r - h.lo) / w);
    h.counts[std::clamp(b, 0, bins - 1)]++;
  }
  return h;
}

PlotFiles emit_plots(const EvaluationReport& report, std::span<const double> residual_values,
                     std::span<const double> predictions, std::span<const double> labels,
                     const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create plot directory '" + dir.string() + "': " + ec.message());
  check_lengths(labels, predictions);

  constexpr double W = 480, H = 360, M = 48;
  const double pw = W - 2 * M, ph = H - 2 * M;

  // Histogram with Gaussian overlay.
  const Histogram h = residual_histogram(residual_values);
  const std::size_t peak = *std::max_element(h.counts.begin(), h.counts.end());
  const auto& g = report.gaussian_fit;
  const double bw = h.bin_width();
  const double n = static_cast<double>(residual_values.size());
  double ymax = static_cast<double>(peak);
  if (g.sigma > 0) ymax = std::max(ymax, n * bw / (g.sigma * std::sqrt(2 * std::numbers::pi)));
  auto xs = [&](double v) { return M + (v - h.lo) / (h.hi - h.lo) * pw; };
  auto ys = [&](double c) { return H - M - c / ymax * ph; };

  std::ostringstream hist;
  hist << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
  hist << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (std::size_t b = 0; b < h.counts.size(); ++b) {
    const double x0 = xs(h.lo + b * bw), x1 = xs(h.lo + (b + 1) * bw);
    const double y0 = ys(static_cast<double>(h.counts[b]));
    hist << "<rect class=\"bin\" data-count=\"" << h.counts[b] << "\" x=\"" << fmt("%.2f", x0) << "\" y=\""
         << fmt("%.2f", y0) << "\" width=\"" << fmt("%.2f", x1 - x0) << "\" height=\"" << fmt("%.2f", H - M - y0)
         << "\" fill=\"#7fa7d9\" stroke=\"#335\"/>\n";
  }
  if (g.sigma > 0) {
    hist << "<polyline fill=\"none\" stroke=\"#c33\" stroke-width=\"2\" points=\"";
    for (int k = 0; k <= 200; ++k) {
      const double v = h.lo + (h.hi - h.lo) * k / 200.0;
      const double z = (v - g.mu) / g.sigma;
      const double c = n * bw * std::exp(-0.5 * z * z) / (g.sigma * std::sqrt(2 * std::numbers::pi));
      hist << fmt("%.2f", xs(v)) << "," << fmt("%.2f", ys(c)) << " ";
    }
    hist << "\"/>\n";
  }
  hist << "<line x1=\"" << M << "\" y1=\"" << H - M << "\" x2=\"" << W - M << "\" y2=\"" << H - M
       << "\" stroke=\"black\"/>\n";
  hist << "<text x=\"" << M << "\" y=\"" << H - 12 << "\" font-size=\"12\">" << fmt("%.3f", h.lo) << "</text>\n";
  hist << "<text x=\"" << W - M - 30 << "\" y=\"" << H - 12 << "\" font-size=\"12\">" << fmt("%.3f", h.hi)
       << "</text>\n";
  hist << "<text x=\"" << M << "\" y=\"24\" font-size=\"14\">residual l - p: mu " << fmt("%.4f", g.mu)
       << ", sigma " << fmt("%.4f", g.sigma) << ", n " << residual_values.size() << "</text>\n";
  hist << "</svg>\n";

  // Scatter of label vs prediction.
  const double side = std::min(pw, ph);
  auto sx = [&](double v) { return M + std::clamp(v, 0.0, 1.0) * side; };
  auto sy = [&](double v) { return H - M - std::clamp(v, 0.0, 1.0) * side; };
  std::ostringstream sc;
  sc << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
  sc << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  sc << "<rect x=\"" << M << "\" y=\"" << H - M - side << "\" width=\"" << side << "\" height=\"" << side
     << "\" fill=\"none\" stroke=\"black\"/>\n";
  sc << "<line class=\"identity\" x1=\"" << sx(0) << "\" y1=\"" << sy(0) << "\" x2=\"" << sx(1) << "\" y2=\""
     << sy(1) << "\" stroke=\"#c33\" stroke-dasharray=\"4 3\"/>\n";
  for (std::size_t i = 0; i < labels.size(); ++i) {
    sc << "<circle class=\"point\" cx=\"" << fmt("%.3f", sx(labels[i])) << "\" cy=\"" << fmt("%.3f", sy(predictions[i]))
       << "\" r=\"2\" fill=\"#247\" fill-opacity=\"0.6\"/>\n";
  }
  sc << "<text x=\"" << M << "\" y=\"" << H - 12 << "\" font-size=\"12\">label</text>\n";
  sc << "<text x=\"8\" y=\"" << M - 8 << "\" font-size=\"12\">prediction</text>\n";
  sc << "<text x=\"" << M + side + 12 << "\" y=\"" << M + 12 << "\" font-size=\"12\">"
     << escape("F_A = " + fmt("%.2f", report.f_accuracy) + " N") << "</text>\n";
  sc << "<text x=\"" << M + side + 12 << "\" y=\"" << M + 30 << "\" font-size=\"12\">"
     << escape("F_P = " + fmt("%.2f", report.f_precision) + " N") << "</text>\n";
  sc << "</svg>\n";

  PlotFiles files{dir / "residuals.svg", dir / "scatter.svg"};
  write_text(files.histogram, hist.str());
  write_text(files.scatter, sc.str());
  return files;
}

std::string report_to_json(const EvaluationReport& r) {
  nlohmann::ordered_json j;
  j["n"] = r.n;
  j["a_mean"] = r.a_mean;
  j["p_rmse"] = r.p_rmse;
  j["f_accuracy"] = r.f_accuracy;
  j["f_precision"] = r.f_precision;
  j["gaussian_fit"] = {{"mu", r.gaussian_fit.mu}, {"sigma", r.gaussian_fit.sigma}};
  nlohmann::ordered_json pc = nlohmann::ordered_json::object();
  for (const auto& [cls, m] : r.per_class) {
    pc[cls] = {{"n", m.n},
               {"a_mean", m.a_mean},
               {"p_rmse", m.p_rmse},
               {"f_accuracy", m.f_accuracy},
               {"f_precision", m.f_precision}};
  }
  j["per_class"] = pc;
  return j.dump(2);
}

EvaluationReport report_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    EvaluationReport r;
    r.n = j.at("n").get<std::size_t>();
    r.a_mean = j.at("a_mean").get<double>();
    r.p_rmse = j.at("p_rmse").get<double>();
    r.f_accuracy = j.at("f_accuracy").get<double>();
    r.f_precision = j.at("f_precision").get<double>();
    r.gaussian_fit = {j.at("gaussian_fit").at("mu").get<double>(), j.at("gaussian_fit").at("sigma").get<double>()};
    for (const auto& [cls, m] : j.at("per_class").items()) {
      r.per_class[cls] = {m.at("n").get<std::size_t>(), m.at("a_mean").get<double>(), m.at("p_rmse").get<double>(),
                          m.at("f_accuracy").get<double>(), m.at("f_precision").get<double>()};
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed report: ") + e.what());
  }
}

std::string format_report_table(const std::vector<std::pair<std::string, EvaluationReport>>& rows) {
  std::set<std::string> classes;
  for (const auto& [name, r] : rows)
    for (const auto& [cls, m] : r.per_class) classes.insert(cls);
  std::vector<std::string> header{"model"};
  header.insert(header.end(), classes.begin(), classes.end());
  header.push_back("overall");

  auto cell = [](double a, double p) { return fmt("%.2f", a) + " ± " + fmt("%.2f", p); };
  std::vector<std::vector<std::string>> table{header};
  for (const auto& [name, r] : rows) {
    std::vector<std::string> line{name};
    for (const auto& cls : classes) {
      auto it = r.per_class.find(cls);
      line.push_back(it == r.per_class.end() ? "-" : cell(it->second.f_accuracy, it->second.f_precision));
    }
    line.push_back(cell(r.f_accuracy, r.f_precision));
    table.push_back(std::move(line));
  }
  // "±" is two bytes but one column.
  auto width = [](const std::string& s) {
    std::size_t w = 0;
    for (unsigned char c : s) w += (c & 0xC0) != 0x80;
    return w;
  };
  std::vector<std::size_t> widths(header.size(), 0);
  for (const auto& line : table)
    for (std::size_t c = 0; c < line.size(); ++c) widths[c] = std::max(widths[c], width(line[c]));
  std::ostringstream out;
  out << "F_A ± F_P [N]\n";
  for (std::size_t r = 0; r < table.size(); ++r) {
    for (std::size_t c = 0; c < table[r].size(); ++c) {
      out << (c ? " | " : "") << table[r][c] << std::string(widths[c] - width(table[r][c]), ' ');
    }
    out << "\n";
    if (r == 0) {
      for (std::size_t c = 0; c < widths.size(); ++c) out << (c ? "-|-" : "") << std::string(widths[c], '-');
      out << "\n";
    }
  }
  return out.str();
}

}  // namespace gripstab
