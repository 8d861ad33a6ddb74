#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "jepa3d/cloud_io.hpp"

namespace jepa3d {

// A tab-separated table with a header row, all cells kept as text.
struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
      if (columns[i] == name) return i;
    std::string have;
    for (const auto& c : columns) have += " " + c;
    throw DataError("table has no column '" + name + "' (columns:" + have + ")");
  }

  std::vector<double> numbers(const std::string& name) const {
    const std::size_t c = column(name);
    std::vector<double> out;
    for (const auto& r : rows) {
      double v = std::numeric_limits<double>::quiet_NaN();
      if (c < r.size()) io_detail::parse_double(r[c], v);
      out.push_back(v);
    }
    return out;
  }
};

inline Table parse_tsv(std::string_view text, const std::string& source = "<tsv>") {
  Table t;
  std::size_t lineno = 0, pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::size_t a = 0;
    for (;;) {
      const std::size_t b = line.find('\t', a);
      cells.emplace_back(line.substr(a, b == std::string_view::npos ? std::string_view::npos : b - a));
      if (b == std::string_view::npos) break;
      a = b + 1;
    }
    if (t.columns.empty()) {
      t.columns = std::move(cells);
    } else {
      if (cells.size() != t.columns.size())
        throw ParseError(source, ParseError::Unit::line, lineno,
                         std::to_string(cells.size()) + " cells, header has " + std::to_string(t.columns.size()));
      t.rows.push_back(std::move(cells));
    }
  }
  if (t.columns.empty()) throw ParseError(source, ParseError::Unit::line, 1, "empty table");
  return t;
}

struct Series {
  std::string label;
  std::vector<double> x, y;
};

struct PlotSpec {
  std::string title;
  std::string x_label = "step";
  std::string y_label = "loss";
  double width = 720, height = 420;
  bool log_y = false;
};

namespace plot_detail {

inline std::string esc(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else if (c == '"') out += "&quot;";
    else out += c;
  }
  return out;
}

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

// Roughly five round tick values covering [lo, hi].
inline std::vector<double> ticks(double lo, double hi) {
  const double span = hi - lo;
  if (!(span > 0)) return {lo};
  const double raw = span / 5.0, mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 5.0, 10.0})
    if (m * mag >= raw) {
      step = m * mag;
      break;
    }
  std::vector<double> out;
  for (double v = std::ceil(lo / step) * step; v <= hi + 1e-9 * span; v += step) out.push_back(v);
  return out;
}

inline const char* palette(std::size_t i) {
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"};
  return colors[i % 8];
}

}  // namespace plot_detail

// Line chart as a standalone SVG document. Non-finite points are skipped.
inline std::string line_chart_svg(const std::vector<Series>& series, const PlotSpec& spec) {
  using namespace plot_detail;
  const double left = 70, right = 150, top = 40, bottom = 50;
  const double pw = spec.width - left - right, ph = spec.height - top - bottom;
  auto ty = [&](double v) { return spec.log_y ? std::log10(v) : v; };
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : series)
    for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i]) || (spec.log_y && s.y[i] <= 0)) continue;
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, ty(s.y[i]));
      y1 = std::max(y1, ty(s.y[i]));
    }
  if (!std::isfinite(x0)) throw DataError("plot: no finite points to draw");
  if (x1 == x0) x1 = x0 + 1;
  if (y1 == y0) y1 = y0 + 1;
  const double pad = 0.05 * (y1 - y0);
  y0 -= pad;
  y1 += pad;
  auto px = [&](double v) { return left + (v - x0) / (x1 - x0) * pw; };
  auto py = [&](double v) { return top + (1 - (ty(v) - y0) / (y1 - y0)) * ph; };

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << spec.width << "\" height=\"" << spec.height
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << left + pw / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << esc(spec.title) << "</text>\n";
  o << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
    << "\" fill=\"none\" stroke=\"#444\"/>\n";
  for (double t : ticks(x0, x1)) {
    const double x = px(t);
    o << "<line x1=\"" << x << "\" y1=\"" << top + ph << "\" x2=\"" << x << "\" y2=\"" << top + ph + 5 << "\" stroke=\"#444\"/>";
    o << "<text x=\"" << x << "\" y=\"" << top + ph + 18 << "\" text-anchor=\"middle\">" << num(t) << "</text>\n";
  }
  for (double t : ticks(y0, y1)) {
    const double y = top + (1 - (t - y0) / (y1 - y0)) * ph;
    o << "<line x1=\"" << left - 5 << "\" y1=\"" << y << "\" x2=\"" << left + pw << "\" y2=\"" << y
      << "\" stroke=\"#ddd\"/>";
    o << "<text x=\"" << left - 8 << "\" y=\"" << y + 4 << "\" text-anchor=\"end\">" << num(spec.log_y ? std::pow(10, t) : t)
      << "</text>\n";
  }
  o << "<text x=\"" << left + pw / 2 << "\" y=\"" << spec.height - 10 << "\" text-anchor=\"middle\">" << esc(spec.x_label)
    << "</text>\n";
  o << "<text transform=\"translate(16," << top + ph / 2 << ") rotate(-90)\" text-anchor=\"middle\">" << esc(spec.y_label)
    << "</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    std::string pts;
    for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i]) || (spec.log_y && s.y[i] <= 0)) continue;
      pts += num(px(s.x[i])) + "," + num(py(s.y[i])) + " ";
    }
    o << "<polyline fill=\"none\" stroke=\"" << palette(k) << "\" stroke-width=\"1.5\" points=\"" << pts << "\"/>\n";
    const double ly = top + 14 + 18 * static_cast<double>(k);
    o << "<line x1=\"" << left + pw + 12 << "\" y1=\"" << ly - 4 << "\" x2=\"" << left + pw + 32 << "\" y2=\"" << ly - 4
      << "\" stroke=\"" << palette(k) << "\" stroke-width=\"2\"/>";
    o << "<text x=\"" << left + pw + 38 << "\" y=\"" << ly << "\">" << esc(s.label) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

// Loss curve (and per-block curves when present) from a metrics log.
inline std::string metrics_svg(const Table& metrics, const std::string& title, const std::string& y_column = "loss") {
  std::vector<Series> series;
  const auto x = metrics.numbers("step");
  series.push_back({y_column, x, metrics.numbers(y_column)});
  if (y_column == "loss")
    for (const auto& c : metrics.columns)
      if (c.rfind("block_", 0) == 0) series.push_back({c, x, metrics.numbers(c)});
  PlotSpec spec;
  spec.title = title;
  spec.y_label = y_column;
  return line_chart_svg(series, spec);
}

}  // namespace jepa3d
