#pragma once

// Minimal deterministic SVG line charts. All coordinates are formatted with
// fixed precision so identical inputs produce byte-identical files.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <string>
#include <utility>
#include <vector>

#include "bon/errors.hpp"

namespace bon::svg {

struct Series {
  std::string label;
  std::vector<std::pair<double, double>> points;
};

namespace detail {

inline std::string fmt(double v, const char* spec = "%.2f") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

inline std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      default: out += c;
    }
  }
  return out;
}

inline constexpr std::array<const char*, 8> kPalette = {
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

}  // namespace detail

inline std::string render_line_chart(const std::string& title, const std::string& x_label,
                                     const std::string& y_label, const std::vector<Series>& series,
                                     int width = 720, int height = 480) {
  if (series.empty()) throw ValidationError("line chart: no series");
  double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  bool first = true;
  for (const auto& s : series) {
    for (const auto& [x, y] : s.points) {
      if (first) {
        xmin = xmax = x;
        ymin = ymax = y;
        first = false;
      }
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
      ymin = std::min(ymin, y);
      ymax = std::max(ymax, y);
    }
  }
  if (first) throw ValidationError("line chart: no points");
  if (xmax == xmin) xmax = xmin + 1;
  if (ymax == ymin) ymax = ymin + 1;
  const double ypad = 0.05 * (ymax - ymin);
  ymin -= ypad;
  ymax += ypad;

  const double ml = 64, mr = 150, mt = 40, mb = 48;
  const double pw = width - ml - mr, ph = height - mt - mb;
  const auto px = [&](double x) { return ml + pw * (x - xmin) / (xmax - xmin); };
  const auto py = [&](double y) { return mt + ph * (1.0 - (y - ymin) / (ymax - ymin)); };

  std::string out;
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(width) + "\" height=\"" +
         std::to_string(height) + "\" viewBox=\"0 0 " + std::to_string(width) + " " + std::to_string(height) + "\">\n";
  out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out += "<text x=\"" + detail::fmt(ml + pw / 2) + "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"15\">" +
         detail::escape(title) + "</text>\n";

  // axes and ticks
  out += "<g stroke=\"#333333\" stroke-width=\"1\">\n";
  out += "<line x1=\"" + detail::fmt(ml) + "\" y1=\"" + detail::fmt(mt) + "\" x2=\"" + detail::fmt(ml) + "\" y2=\"" +
         detail::fmt(mt + ph) + "\"/>\n";
  out += "<line x1=\"" + detail::fmt(ml) + "\" y1=\"" + detail::fmt(mt + ph) + "\" x2=\"" + detail::fmt(ml + pw) +
         "\" y2=\"" + detail::fmt(mt + ph) + "\"/>\n";
  out += "</g>\n";
  out += "<g font-family=\"sans-serif\" font-size=\"11\" fill=\"#333333\">\n";
  const int ticks = 5;
  for (int i = 0; i <= ticks; ++i) {
    const double tx = xmin + (xmax - xmin) * i / ticks;
    const double ty = ymin + (ymax - ymin) * i / ticks;
    out += "<text x=\"" + detail::fmt(px(tx)) + "\" y=\"" + detail::fmt(mt + ph + 16) +
           "\" text-anchor=\"middle\">" + detail::fmt(tx, "%.4g") + "</text>\n";
    out += "<text x=\"" + detail::fmt(ml - 8) + "\" y=\"" + detail::fmt(py(ty) + 4) +
           "\" text-anchor=\"end\">" + detail::fmt(ty, "%.4g") + "</text>\n";
  }
  out += "<text x=\"" + detail::fmt(ml + pw / 2) + "\" y=\"" + detail::fmt(mt + ph + 36) +
         "\" text-anchor=\"middle\">" + detail::escape(x_label) + "</text>\n";
  out += "<text x=\"16\" y=\"" + detail::fmt(mt + ph / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " +
         detail::fmt(mt + ph / 2) + ")\">" + detail::escape(y_label) + "</text>\n";
  out += "</g>\n";

  for (std::size_t si = 0; si < series.size(); ++si) {
    const char* color = detail::kPalette[si % detail::kPalette.size()];
    std::string pts;
    for (const auto& [x, y] : series[si].points) {
      if (!pts.empty()) pts += ' ';
      pts += detail::fmt(px(x)) + "," + detail::fmt(py(y));
    }
    out += "<polyline fill=\"none\" stroke=\"";
    out += color;
    out += "\" stroke-width=\"1.6\" points=\"" + pts + "\"/>\n";
    for (const auto& [x, y] : series[si].points) {
      out += "<circle cx=\"" + detail::fmt(px(x)) + "\" cy=\"" + detail::fmt(py(y)) + "\" r=\"2.4\" fill=\"";
      out += color;
      out += "\"/>\n";
    }
    const double ly = mt + 16 * static_cast<double>(si);
    out += "<rect x=\"" + detail::fmt(ml + pw + 10) + "\" y=\"" + detail::fmt(ly) +
           "\" width=\"10\" height=\"10\" fill=\"";
    out += color;
    out += "\"/>\n";
    out += "<text x=\"" + detail::fmt(ml + pw + 25) + "\" y=\"" + detail::fmt(ly + 9) +
           "\" font-family=\"sans-serif\" font-size=\"11\">" + detail::escape(series[si].label) + "</text>\n";
  }
  out += "</svg>\n";
  return out;
}

}  // namespace bon::svg
