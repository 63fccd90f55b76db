#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "prionvit/harness.hpp"

namespace prionvit::harness {

using nlohmann::json;

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt_short(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace

json to_json(const training::MetricsReport& r) {
  return json{{"mse", r.mse},
              {"mae", r.mae},
              {"rmse", r.rmse},
              {"max_error", r.max_error},
              {"r2", r.r2 ? json(*r.r2) : json(nullptr)},
              {"count", r.count},
              {"config_hash", r.config_hash},
              {"seed", r.seed},
              {"split", r.split}};
}

json to_json(const training::TrainHistory& h) {
  json epochs = json::array();
  for (const auto& e : h.epochs) {
    epochs.push_back(json{{"epoch", e.epoch},
                          {"train_loss", e.train_loss},
                          {"validation", to_json(e.validation)},
                          {"wall_time_s", e.wall_time_s}});
  }
  return json{{"best_epoch", h.best_epoch}, {"epochs", epochs}};
}

void write_json(const std::filesystem::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

void write_history_csv(const std::filesystem::path& path, const training::TrainHistory& history) {
  std::ostringstream out;
  out << "epoch,train_loss,val_mse,val_mae,val_rmse,val_max_error,val_r2,wall_time_s\n";
  for (const auto& e : history.epochs) {
    const auto& v = e.validation;
    out << e.epoch << ',' << fmt(e.train_loss) << ',' << fmt(v.mse) << ',' << fmt(v.mae) << ',' << fmt(v.rmse) << ','
        << fmt(v.max_error) << ',' << (v.r2 ? fmt(*v.r2) : std::string()) << ',' << fmt(e.wall_time_s) << '\n';
  }
  write_text(path, out.str());
}

std::string scatter_svg(std::span<const double> predictions, std::span<const double> targets) {
  if (predictions.size() != targets.size()) throw std::invalid_argument("scatter: length mismatch");
  if (predictions.empty()) throw std::invalid_argument("scatter: empty input");
  double lo = targets[0], hi = targets[0];
  for (std::size_t i = 0; i < targets.size(); ++i) {
    lo = std::min({lo, targets[i], predictions[i]});
    hi = std::max({hi, targets[i], predictions[i]});
  }
  if (!std::isfinite(lo) || !std::isfinite(hi)) throw std::invalid_argument("scatter: non-finite value");
  if (hi - lo < 1e-9) {
    lo -= 1.0;
    hi += 1.0;
  }
  const double size = 480.0, margin = 50.0, span = size - 2 * margin;
  auto sx = [&](double v) { return margin + (v - lo) / (hi - lo) * span; };
  auto sy = [&](double v) { return size - margin - (v - lo) / (hi - lo) * span; };

  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size << "\" height=\"" << size << "\" viewBox=\"0 0 "
    << size << ' ' << size << "\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<rect x=\"" << margin << "\" y=\"" << margin << "\" width=\"" << span << "\" height=\"" << span
    << "\" fill=\"none\" stroke=\"#444\"/>\n";
  s << "<line class=\"identity\" x1=\"" << fmt(sx(lo)) << "\" y1=\"" << fmt(sy(lo)) << "\" x2=\"" << fmt(sx(hi))
    << "\" y2=\"" << fmt(sy(hi)) << "\" stroke=\"#c33\" stroke-dasharray=\"4 3\"/>\n";
  s << "<g fill=\"#1f5fa8\" fill-opacity=\"0.6\">\n";
  for (std::size_t i = 0; i < targets.size(); ++i) {
    s << "<circle cx=\"" << fmt(sx(targets[i])) << "\" cy=\"" << fmt(sy(predictions[i])) << "\" r=\"2.5\"/>\n";
  }
  s << "</g>\n";
  s << "<text x=\"" << size / 2 << "\" y=\"" << size - 12 << "\" text-anchor=\"middle\" font-size=\"13\">"
    << "target (C)</text>\n";
  s << "<text x=\"14\" y=\"" << size / 2 << "\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 14 "
    << size / 2 << ")\">prediction (C)</text>\n";
  s << "<text x=\"" << margin << "\" y=\"" << size - margin + 16 << "\" font-size=\"11\">" << fmt_short(lo)
    << "</text>\n";
  s << "<text x=\"" << size - margin << "\" y=\"" << size - margin + 16 << "\" font-size=\"11\" text-anchor=\"end\">"
    << fmt_short(hi) << "</text>\n";
  s << "</svg>\n";
  return s.str();
}

void emit_scatter(std::span<const double> predictions, std::span<const double> targets,
                  const std::filesystem::path& out_dir) {
  const std::string svg = scatter_svg(predictions, targets);
  std::ostringstream csv;
  csv << "target_c,prediction_c\n";
  for (std::size_t i = 0; i < targets.size(); ++i) csv << fmt(targets[i]) << ',' << fmt(predictions[i]) << '\n';
  write_text(out_dir / kScatterCsv, csv.str());
  write_text(out_dir / kScatterSvg, svg);
}

json to_json(const GradCheckReport& r) {
  json entries = json::array();
  for (const auto& e : r.entries) {
    entries.push_back(json{{"name", e.name},
                           {"checked", e.checked},
                           {"refined", e.refined},
                           {"max_rel_error", e.max_rel_error},
                           {"worst_index", e.worst_index},
                           {"analytic", e.analytic},
                           {"numeric", e.numeric}});
  }
  return json{{"entries", entries}, {"max_rel_error", r.max_rel_error}, {"tol", r.tol}, {"passed", r.passed}};
}

}  // namespace prionvit::harness
