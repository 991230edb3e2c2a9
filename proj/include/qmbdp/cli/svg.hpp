#pragma once

// Self-contained SVG line plots of the CSV tables. One polyline per group of
// rows; rows whose status column is not "ok" are skipped.

#include <qmbdp/error.hpp>
#include <qmbdp/io.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <string>
#include <vector>

namespace qmbdp::cli {

struct PlotKind {
  std::string name;
  std::string x;
  std::string y;
  std::vector<std::string> group;
  bool log_y = false;
};

inline const std::vector<PlotKind>& plot_kinds() {
  static const std::vector<PlotKind> kinds = {
      {"rn", "delta", "R_n", {"n_sites", "tau"}, true},
      {"transition", "delta", "R_n", {"n_sites", "tau"}, true},
      {"series", "k", "R_k", {"delta", "tau"}, true},
      {"lambda1", "delta", "lambda1", {"n_sites", "tau"}, true},
      {"gaps", "delta", "g_alpha", {"alpha"}, true},
      {"dynamics", "t", "N_R", {"delta"}, false},
      {"trajectory", "delta", "C", {"trajectory_index"}, false},
      {"singleshot", "delta", "P_pq", {"n_sites", "t"}, true},
  };
  return kinds;
}

inline const PlotKind& plot_kind(const std::string& name) {
  for (const auto& k : plot_kinds())
    if (k.name == name) return k;
  throw ValidationError("unknown plot kind '" + name + "'");
}

struct PlotSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  bool clamped = false;
};

/// Extracts the series a plot kind draws; errors when columns are missing.
inline std::vector<PlotSeries> plot_series(const CsvTable& table, const PlotKind& kind, double floor) {
  const std::size_t xc = table.column(kind.x);
  const std::size_t yc = table.column(kind.y);
  std::vector<std::size_t> gc;
  for (const auto& g : kind.group)
    if (table.has_column(g)) gc.push_back(table.column(g));
  const bool has_status = table.has_column("status");
  const std::size_t sc = has_status ? table.column("status") : 0;

  std::vector<PlotSeries> out;
  std::map<std::string, std::size_t> index;
  for (const auto& row : table.rows()) {
    if (has_status && row[sc] != "ok") continue;
    std::string label;
    for (std::size_t i = 0; i < gc.size(); ++i) {
      if (i) label += " ";
      label += table.header()[gc[i]] + "=" + row[gc[i]];
    }
    double x = 0.0;
    double y = 0.0;
    try {
      x = parse_number(row[xc]);
      y = parse_number(row[yc]);
    } catch (const ValidationError&) {
      throw ValidationError("non-numeric value in columns " + kind.x + "/" + kind.y);
    }
    if (!std::isfinite(x) || std::isnan(y)) continue;
    auto [it, inserted] = index.emplace(label, out.size());
    if (inserted) out.push_back({label, {}, {}, false});
    PlotSeries& s = out[it->second];
    if (kind.log_y && !(y >= floor)) {
      y = floor;
      s.clamped = true;
    }
    if (!std::isfinite(y)) continue;
    s.x.push_back(x);
    s.y.push_back(y);
  }
  return out;
}

inline std::string render_svg(const std::vector<PlotSeries>& series, const PlotKind& kind) {
  constexpr double width = 640.0;
  constexpr double height = 420.0;
  constexpr double left = 70.0;
  constexpr double right = 180.0;
  constexpr double top = 20.0;
  constexpr double bottom = 50.0;
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

  auto ty = [&](double y) { return kind.log_y ? std::log10(y) : y; };
  double x0 = std::numeric_limits<double>::infinity();
  double x1 = -x0;
  double y0 = x0;
  double y1 = -x0;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, ty(s.y[i]));
      y1 = std::max(y1, ty(s.y[i]));
    }
  if (!(x1 >= x0)) x0 = 0.0, x1 = 1.0;
  if (!(y1 >= y0)) y0 = 0.0, y1 = 1.0;
  if (x1 == x0) x0 -= 0.5, x1 += 0.5;
  if (y1 == y0) y0 -= 0.5, y1 += 0.5;
  const double pw = width - left - right;
  const double ph = height - top - bottom;
  auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * pw; };
  auto py = [&](double y) { return top + (1.0 - (ty(y) - y0) / (y1 - y0)) * ph; };
  auto num = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return std::string(buf);
  };
  auto tick = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return std::string(buf);
  };

  std::string out;
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(width) + "\" height=\"" + num(height) +
         "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  out += "<rect x=\"" + num(left) + "\" y=\"" + num(top) + "\" width=\"" + num(pw) + "\" height=\"" + num(ph) +
         "\" fill=\"none\" stroke=\"black\"/>\n";
  const std::string ylabel = kind.log_y ? "log10 " + kind.y : kind.y;
  out += "<text x=\"" + num(left + pw / 2) + "\" y=\"" + num(height - 10) + "\" text-anchor=\"middle\">" + kind.x +
         "</text>\n";
  out += "<text x=\"15\" y=\"" + num(top + ph / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 15 " +
         num(top + ph / 2) + ")\">" + ylabel + "</text>\n";
  out += "<text x=\"" + num(left) + "\" y=\"" + num(top + ph + 16) + "\" text-anchor=\"middle\">" + tick(x0) + "</text>\n";
  out += "<text x=\"" + num(left + pw) + "\" y=\"" + num(top + ph + 16) + "\" text-anchor=\"middle\">" + tick(x1) +
         "</text>\n";
  out += "<text x=\"" + num(left - 6) + "\" y=\"" + num(top + ph) + "\" text-anchor=\"end\">" + tick(y0) + "</text>\n";
  out += "<text x=\"" + num(left - 6) + "\" y=\"" + num(top + 10) + "\" text-anchor=\"end\">" + tick(y1) + "</text>\n";

  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* colour = palette[k % (sizeof palette / sizeof palette[0])];
    out += "<polyline fill=\"none\" stroke=\"" + std::string(colour) + "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (i) out += ' ';
      out += num(px(s.x[i])) + "," + num(py(s.y[i]));
    }
    out += "\"/>\n";
    const double ly = top + 14.0 + 16.0 * static_cast<double>(k);
    std::string label = s.label.empty() ? kind.y : s.label;
    if (s.clamped) label += " (clamped at floor)";
    out += "<text x=\"" + num(left + pw + 10) + "\" y=\"" + num(ly) + "\" fill=\"" + colour + "\">" + label +
           "</text>\n";
  }
  out += "</svg>\n";
  return out;
}

inline std::string plot_csv(const CsvTable& table, const std::string& kind_name, double floor = 1e-300) {
  const PlotKind& kind = plot_kind(kind_name);
  return render_svg(plot_series(table, kind, floor), kind);
}

}  // namespace qmbdp::cli
