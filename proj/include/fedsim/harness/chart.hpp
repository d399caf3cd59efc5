// Copyright 2026 The Fedsim Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Static SVG line charts: one line per sweep value (mean over seeds) with a
// min-max band, and a log-scale epsilon panel underneath when the metrics
// carry finite epsilon values. Output bytes depend only on the input rows.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "fedsim/common/error.hpp"
#include "fedsim/harness/metrics.hpp"

namespace fedsim {

struct ChartOptions {
  std::string column = "accuracy";
  int width = 760;
  int height = 420;
  int eps_height = 260;
};

namespace chart_detail {

inline const char* color(std::size_t i) {
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                  "#9467bd", "#8c564b", "#e377c2", "#17becf"};
  return palette[i % 8];
}

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline std::string tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

inline std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

// 1, 2, 5 x 10^k step giving at most ~8 ticks.
inline double nice_step(double span) {
  if (!(span > 0.0)) return 1.0;
  const double raw = span / 8.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  for (double m : {1.0, 2.0, 5.0, 10.0}) {
    if (m * mag >= raw) return m * mag;
  }
  return 10.0 * mag;
}

struct Panel {
  double x0, y0, w, h;        // plot area in pixels
  double xmin, xmax, ymin, ymax;
  bool log_y = false;

  double px(double x) const { return x0 + (x - xmin) / (xmax - xmin) * w; }
  double py(double y) const {
    if (log_y) y = std::log10(y);
    const double lo = log_y ? std::log10(ymin) : ymin;
    const double hi = log_y ? std::log10(ymax) : ymax;
    return y0 + h - (y - lo) / (hi - lo) * h;
  }
};

inline void axes(std::string& svg, const Panel& p, const std::string& ylabel) {
  svg += "<rect x=\"" + num(p.x0) + "\" y=\"" + num(p.y0) + "\" width=\"" + num(p.w) +
         "\" height=\"" + num(p.h) + "\" fill=\"none\" stroke=\"#444\"/>\n";
  const double xs = nice_step(p.xmax - p.xmin);
  for (double x = std::ceil(p.xmin / xs) * xs; x <= p.xmax + 1e-9; x += xs) {
    svg += "<line x1=\"" + num(p.px(x)) + "\" y1=\"" + num(p.y0 + p.h) + "\" x2=\"" +
           num(p.px(x)) + "\" y2=\"" + num(p.y0 + p.h + 4) + "\" stroke=\"#444\"/>\n";
    svg += "<text x=\"" + num(p.px(x)) + "\" y=\"" + num(p.y0 + p.h + 16) +
           "\" text-anchor=\"middle\">" + tick(x) + "</text>\n";
  }
  if (p.log_y) {
    for (double e = std::floor(std::log10(p.ymin)); e <= std::log10(p.ymax) + 1e-9; e += 1.0) {
      const double y = std::pow(10.0, e);
      if (y < p.ymin * (1 - 1e-9)) continue;
      svg += "<line x1=\"" + num(p.x0) + "\" y1=\"" + num(p.py(y)) + "\" x2=\"" +
             num(p.x0 + p.w) + "\" y2=\"" + num(p.py(y)) + "\" stroke=\"#ddd\"/>\n";
      svg += "<text x=\"" + num(p.x0 - 6) + "\" y=\"" + num(p.py(y) + 4) +
             "\" text-anchor=\"end\">" + tick(y) + "</text>\n";
    }
  } else {
    const double ys = nice_step(p.ymax - p.ymin);
    for (double y = std::ceil(p.ymin / ys) * ys; y <= p.ymax + 1e-9; y += ys) {
      svg += "<line x1=\"" + num(p.x0) + "\" y1=\"" + num(p.py(y)) + "\" x2=\"" +
             num(p.x0 + p.w) + "\" y2=\"" + num(p.py(y)) + "\" stroke=\"#ddd\"/>\n";
      svg += "<text x=\"" + num(p.x0 - 6) + "\" y=\"" + num(p.py(y) + 4) +
             "\" text-anchor=\"end\">" + tick(y) + "</text>\n";
    }
  }
  svg += "<text x=\"" + num(p.x0 + p.w / 2) + "\" y=\"" + num(p.y0 + p.h + 34) +
         "\" text-anchor=\"middle\">round</text>\n";
  svg += "<text transform=\"translate(" + num(p.x0 - 46) + "," + num(p.y0 + p.h / 2) +
         ") rotate(-90)\" text-anchor=\"middle\">" + escape(ylabel) + "</text>\n";
}

inline void series(std::string& svg, const Panel& p, const std::map<std::size_t, Stat>& curve,
                   const char* col, bool band) {
  if (curve.empty()) return;
  if (band && curve.size() > 1) {
    std::string pts;
    for (const auto& [r, st] : curve) pts += num(p.px(r)) + "," + num(p.py(st.max)) + " ";
    for (auto it = curve.rbegin(); it != curve.rend(); ++it) {
      pts += num(p.px(it->first)) + "," + num(p.py(it->second.min)) + " ";
    }
    pts.pop_back();
    svg += "<polygon points=\"" + pts + "\" fill=\"" + col +
           "\" fill-opacity=\"0.15\" stroke=\"none\"/>\n";
  }
  std::string pts;
  for (const auto& [r, st] : curve) pts += num(p.px(r)) + "," + num(p.py(st.mean)) + " ";
  pts.pop_back();
  svg += "<polyline points=\"" + pts + "\" fill=\"none\" stroke=\"" + col +
         "\" stroke-width=\"1.5\"/>\n";
}

}  // namespace chart_detail

// One SVG for the rows of `experiment`. Throws ChartError when there is
// nothing to draw.
inline std::string render_chart(const std::vector<MetricsRow>& rows, const std::string& experiment,
                                const ChartOptions& opt = {}) {
  using namespace chart_detail;
  std::vector<MetricsRow> mine;
  for (const auto& r : rows) {
    if (r.experiment == experiment) mine.push_back(r);
  }
  if (mine.empty()) throw ChartError("no metrics rows for experiment '" + experiment + "'");
  const auto groups = group_series(mine, opt.column);

  std::vector<std::map<std::size_t, Stat>> curves;
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  double ymin = xmin, ymax = -xmin;
  for (const auto& g : groups) {
    curves.push_back(mean_curve(g));
    for (const auto& [r, st] : curves.back()) {
      if (!std::isfinite(st.min) || !std::isfinite(st.max)) continue;
      xmin = std::min(xmin, static_cast<double>(r));
      xmax = std::max(xmax, static_cast<double>(r));
      ymin = std::min(ymin, st.min);
      ymax = std::max(ymax, st.max);
    }
  }
  if (!std::isfinite(xmin)) {
    throw ChartError("experiment '" + experiment + "' has no finite '" + opt.column + "' values");
  }
  if (xmax == xmin) xmax = xmin + 1;
  if (opt.column == "accuracy") {
    ymin = 0.0;
    ymax = 1.0;
  } else if (ymax == ymin) {
    ymax = ymin + 1.0;
  }

  // Epsilon panel: finite positive values only (z = 0 reports infinity).
  std::vector<std::map<std::size_t, Stat>> eps;
  double emin = std::numeric_limits<double>::infinity(), emax = 0.0;
  if (opt.column != "epsilon") {
    for (const auto& g : group_series(mine, "epsilon")) {
      std::map<std::size_t, Stat> c;
      for (const auto& [r, st] : mean_curve(g)) {
        if (std::isfinite(st.max) && st.min > 0.0) {
          c[r] = st;
          emin = std::min(emin, st.min);
          emax = std::max(emax, st.max);
        }
      }
      eps.push_back(std::move(c));
    }
  }
  const bool has_eps = emax > 0.0;
  if (has_eps) {
    emin = std::pow(10.0, std::floor(std::log10(emin)));
    emax = std::pow(10.0, std::ceil(std::log10(emax)));
    if (emax <= emin) emax = emin * 10.0;
  }

  const double left = 70, right = 190, top = 40;
  const int total_h = opt.height + (has_eps ? opt.eps_height : 0);
  Panel main{left, top, opt.width - left - right, opt.height - top - 50.0,
             xmin, xmax, ymin, ymax, false};

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(opt.width) +
         "\" height=\"" + std::to_string(total_h) + "\" font-family=\"sans-serif\" "
         "font-size=\"11\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg += "<text x=\"" + num(left) + "\" y=\"22\" font-size=\"14\">" +
         escape(experiment + ": " + opt.column + " vs round") + "</text>\n";
  axes(svg, main, opt.column);
  for (std::size_t i = 0; i < curves.size(); ++i) series(svg, main, curves[i], color(i), true);
  // legend
  for (std::size_t i = 0; i < groups.size(); ++i) {
    const double y = top + 12 + 18.0 * static_cast<double>(i);
    const double x = left + main.w + 14;
    svg += "<line x1=\"" + num(x) + "\" y1=\"" + num(y - 4) + "\" x2=\"" + num(x + 20) +
           "\" y2=\"" + num(y - 4) + "\" stroke=\"" + color(i) + "\" stroke-width=\"2\"/>\n";
    const std::string label = groups[i].key.sweep.empty() ? "(single run)" : groups[i].key.sweep;
    svg += "<text x=\"" + num(x + 26) + "\" y=\"" + num(y) + "\">" + escape(label) +
           " (n=" + std::to_string(groups[i].seeds.size()) + ")</text>\n";
  }
  if (has_eps) {
    Panel ep{left, opt.height + 10.0, main.w, opt.eps_height - 60.0, xmin, xmax, emin, emax, true};
    svg += "<text x=\"" + num(left) + "\" y=\"" + num(opt.height + 2.0) +
           "\" font-size=\"13\">cumulative epsilon (log scale)</text>\n";
    axes(svg, ep, "epsilon");
    for (std::size_t i = 0; i < eps.size(); ++i) series(svg, ep, eps[i], color(i), false);
  }
  svg += "</svg>\n";
  return svg;
}

inline std::vector<std::string> experiments_in(const std::vector<MetricsRow>& rows) {
  std::vector<std::string> out;
  for (const auto& r : rows) {
    if (std::find(out.begin(), out.end(), r.experiment) == out.end()) out.push_back(r.experiment);
  }
  return out;
}

// Renders every experiment in the metrics file into out_dir/<experiment>_<column>.svg.
// All charts are rendered before any file is written.
inline std::vector<std::string> render_charts(const std::string& metrics_path,
                                              const std::string& out_dir,
                                              const ChartOptions& opt = {}) {
  const auto rows = read_metrics_csv(metrics_path);
  if (rows.empty()) throw ChartError("metrics file " + metrics_path + " has no rows");
  std::vector<std::pair<std::string, std::string>> files;
  for (const auto& e : experiments_in(rows)) {
    files.emplace_back((std::filesystem::path(out_dir) / (e + "_" + opt.column + ".svg")).string(),
                       render_chart(rows, e, opt));
  }
  std::filesystem::create_directories(out_dir);
  std::vector<std::string> paths;
  for (const auto& [path, svg] : files) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out << svg;
    paths.push_back(path);
  }
  return paths;
}

}  // namespace fedsim
