#pragma once

// Minimal SVG line plots of an aggregate CSV: mean line, +-1 stddev band,
// dashed marker at the switch step.

#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ted/csv.hpp"

namespace ted {

struct PlotSeries {
  std::string metric;  // file stem
  std::vector<double> steps;
  std::vector<double> mean;
  std::vector<double> stddev;
};

namespace detail {

inline std::string svg_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string render_svg(const PlotSeries& s, double switch_step) {
  const double w = 640, h = 400, ml = 60, mr = 20, mt = 30, mb = 40;
  double x0 = s.steps.front(), x1 = s.steps.back();
  double y0 = s.mean.front() - s.stddev.front(), y1 = s.mean.front() + s.stddev.front();
  for (std::size_t i = 0; i < s.steps.size(); ++i) {
    y0 = std::min(y0, s.mean[i] - s.stddev[i]);
    y1 = std::max(y1, s.mean[i] + s.stddev[i]);
  }
  x0 = std::min(x0, switch_step);
  x1 = std::max(x1, switch_step);
  if (x1 == x0) x1 = x0 + 1;
  if (y1 == y0) {
    y0 -= 0.5;
    y1 += 0.5;
  }
  auto px = [&](double x) { return ml + (x - x0) / (x1 - x0) * (w - ml - mr); };
  auto py = [&](double y) { return h - mb - (y - y0) / (y1 - y0) * (h - mt - mb); };
  auto join = [](const std::vector<double>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? " " : "") + svg_number(v[i]);
    return out;
  };
  std::vector<double> upper, lower;
  for (std::size_t i = 0; i < s.mean.size(); ++i) {
    upper.push_back(s.mean[i] + s.stddev[i]);
    lower.push_back(s.mean[i] - s.stddev[i]);
  }

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\" viewBox=\"0 0 " << w
     << " " << h << "\">\n";
  os << "<title>" << s.metric << "</title>\n";
  os << "<rect x=\"0\" y=\"0\" width=\"" << w << "\" height=\"" << h << "\" fill=\"white\"/>\n";
  os << "<g class=\"band\" data-steps=\"" << join(s.steps) << "\" data-upper=\"" << join(upper) << "\" data-lower=\""
     << join(lower) << "\">\n<polygon fill=\"#1f77b4\" fill-opacity=\"0.2\" stroke=\"none\" points=\"";
  for (std::size_t i = 0; i < s.steps.size(); ++i) os << px(s.steps[i]) << "," << py(upper[i]) << " ";
  for (std::size_t i = s.steps.size(); i-- > 0;) os << px(s.steps[i]) << "," << py(lower[i]) << " ";
  os << "\"/>\n</g>\n";
  os << "<g class=\"mean\" data-steps=\"" << join(s.steps) << "\" data-values=\"" << join(s.mean)
     << "\">\n<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\" points=\"";
  for (std::size_t i = 0; i < s.steps.size(); ++i) os << px(s.steps[i]) << "," << py(s.mean[i]) << " ";
  os << "\"/>\n</g>\n";
  os << "<line class=\"switch\" data-step=\"" << svg_number(switch_step) << "\" x1=\"" << px(switch_step) << "\" y1=\""
     << mt << "\" x2=\"" << px(switch_step) << "\" y2=\"" << h - mb
     << "\" stroke=\"black\" stroke-dasharray=\"6,4\"/>\n";
  os << "<line x1=\"" << ml << "\" y1=\"" << h - mb << "\" x2=\"" << w - mr << "\" y2=\"" << h - mb
     << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << h - mb << "\" stroke=\"black\"/>\n";
  os << "<text x=\"" << ml << "\" y=\"" << h - 10 << "\" font-size=\"12\">" << svg_number(x0) << "</text>\n";
  os << "<text x=\"" << w - mr - 60 << "\" y=\"" << h - 10 << "\" font-size=\"12\">" << svg_number(x1) << "</text>\n";
  os << "<text x=\"4\" y=\"" << py(y1) + 4 << "\" font-size=\"12\">" << csv::number(y1) << "</text>\n";
  os << "<text x=\"4\" y=\"" << py(y0) << "\" font-size=\"12\">" << csv::number(y0) << "</text>\n";
  os << "<text x=\"" << ml << "\" y=\"20\" font-size=\"14\">" << s.metric << " (mean +- 1 sd; dashed: switch)</text>\n";
  os << "</svg>\n";
  return os.str();
}

}  // namespace detail

/// Series for return, TED loss and disentanglement score; metrics whose
/// columns are entirely empty are omitted.
inline std::vector<PlotSeries> read_plot_series(const csv::Table& t) {
  if (t.rows.empty()) throw ParseError(t.row_lines.empty() ? 1 : t.row_lines.back(), "aggregate CSV has no data rows");
  const auto step_col = t.column("step");
  struct Spec {
    const char* metric;
    const char* mean;
    const char* sd;
  };
  const Spec specs[] = {{"return", "eval_return_mean", "eval_return_std"},
                        {"ted_loss", "ted_loss_mean", "ted_loss_std"},
                        {"disentanglement", "disentanglement_mean", "disentanglement_std"}};
  std::vector<PlotSeries> out;
  for (const auto& sp : specs) {
    const auto mc = t.find_column(sp.mean);
    const auto sc = t.find_column(sp.sd);
    if (!mc || !sc) continue;
    PlotSeries s{sp.metric, {}, {}, {}};
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      auto step = t.value(r, step_col);
      if (!step) throw ParseError(t.row_lines[r], "empty step");
      auto m = t.value(r, *mc);
      if (!m) continue;
      s.steps.push_back(*step);
      s.mean.push_back(*m);
      s.stddev.push_back(t.value(r, *sc).value_or(0.0));
    }
    if (!s.steps.empty()) out.push_back(std::move(s));
  }
  return out;
}

/// Last train-phase step of an aggregate table.
inline std::optional<double> infer_switch_step(const csv::Table& t) {
  const auto pc = t.find_column("phase");
  if (!pc) return std::nullopt;
  std::optional<double> out;
  for (std::size_t r = 0; r < t.rows.size(); ++r)
    if (t.rows[r][*pc] == "train") out = t.value(r, t.column("step"));
  return out;
}

/// Writes <out_dir>/<metric>.svg per series; returns the written paths.
inline std::vector<std::string> emit_plots(const std::string& aggregate_csv, const std::string& out_dir,
                                           std::optional<double> switch_step = std::nullopt) {
  const auto table = csv::read(aggregate_csv);
  const auto series = read_plot_series(table);
  const double sw = switch_step ? *switch_step : infer_switch_step(table).value_or(0.0);
  std::filesystem::create_directories(out_dir);
  std::vector<std::string> paths;
  for (const auto& s : series) {
    const auto path = (std::filesystem::path(out_dir) / (s.metric + ".svg")).string();
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot write '" + path + "'");
    os << detail::render_svg(s, sw);
    paths.push_back(path);
  }
  return paths;
}

}  // namespace ted
