#pragma once

// Minimal static SVG charts (line and scatter). Figures are a convenience on
// top of the CSV outputs, so this stays deliberately small.

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "ssmkit/common.hpp"

namespace ssmkit::io {

struct Series {
  std::string label;
  std::string color = "#1f77b4";
  std::vector<double> x, y;
  bool points_only = false;
};

class SvgChart {
public:
  SvgChart(std::string title, std::string x_label, std::string y_label)
      : title_(std::move(title)), x_label_(std::move(x_label)), y_label_(std::move(y_label)) {}

  void add(Series s) { series_.push_back(std::move(s)); }

  void write(const std::filesystem::path& path) const {
    double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
    double ymin = xmin, ymax = -xmin;
    for (const auto& s : series_)
      for (std::size_t i = 0; i < s.x.size(); ++i) {
        xmin = std::min(xmin, s.x[i]);
        xmax = std::max(xmax, s.x[i]);
        ymin = std::min(ymin, s.y[i]);
        ymax = std::max(ymax, s.y[i]);
      }
    if (!std::isfinite(xmin)) {
      xmin = 0.0;
      xmax = 1.0;
      ymin = 0.0;
      ymax = 1.0;
    }
    if (xmax == xmin) xmax = xmin + 1.0;
    if (ymax == ymin) ymax = ymin + 1.0;
    double xpad = 0.05 * (xmax - xmin), ypad = 0.05 * (ymax - ymin);
    xmin -= xpad;
    xmax += xpad;
    ymin -= ypad;
    ymax += ypad;

    const double w = 640, h = 420, ml = 70, mr = 20, mt = 40, mb = 50;
    auto px = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * (w - ml - mr); };
    auto py = [&](double y) { return h - mb - (y - ymin) / (ymax - ymin) * (h - mt - mb); };

    std::ofstream out(path);
    if (!out) throw IoError("cannot write svg: " + path.string());
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
        << "\" viewBox=\"0 0 " << w << " " << h << "\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out << "<text x=\"" << w / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">"
        << title_ << "</text>\n";

    // axes
    out << "<line x1=\"" << ml << "\" y1=\"" << h - mb << "\" x2=\"" << w - mr << "\" y2=\""
        << h - mb << "\" stroke=\"black\"/>\n";
    out << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << h - mb
        << "\" stroke=\"black\"/>\n";
    for (int t = 0; t <= 4; ++t) {
      double fx = xmin + (xmax - xmin) * t / 4.0;
      double fy = ymin + (ymax - ymin) * t / 4.0;
      out << "<text x=\"" << px(fx) << "\" y=\"" << h - mb + 18
          << "\" text-anchor=\"middle\" font-size=\"11\">" << fmt_double(round3(fx)) << "</text>\n";
      out << "<text x=\"" << ml - 8 << "\" y=\"" << py(fy) + 4
          << "\" text-anchor=\"end\" font-size=\"11\">" << fmt_double(round3(fy)) << "</text>\n";
    }
    out << "<text x=\"" << (ml + w - mr) / 2 << "\" y=\"" << h - 12
        << "\" text-anchor=\"middle\" font-size=\"13\">" << x_label_ << "</text>\n";
    out << "<text x=\"18\" y=\"" << (mt + h - mb) / 2
        << "\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 18 "
        << (mt + h - mb) / 2 << ")\">" << y_label_ << "</text>\n";

    double legend_y = mt + 6;
    for (const auto& s : series_) {
      if (!s.points_only) {
        out << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t i = 0; i < s.x.size(); ++i)
          out << px(s.x[i]) << "," << py(s.y[i]) << (i + 1 < s.x.size() ? " " : "");
        out << "\"/>\n";
      }
      for (std::size_t i = 0; i < s.x.size(); ++i)
        out << "<circle cx=\"" << px(s.x[i]) << "\" cy=\"" << py(s.y[i])
            << "\" r=\"2.5\" fill=\"" << s.color << "\"/>\n";
      if (!s.label.empty()) {
        out << "<rect x=\"" << w - mr - 150 << "\" y=\"" << legend_y - 9
            << "\" width=\"10\" height=\"10\" fill=\"" << s.color << "\"/>\n";
        out << "<text x=\"" << w - mr - 135 << "\" y=\"" << legend_y
            << "\" font-size=\"12\">" << s.label << "</text>\n";
        legend_y += 16;
      }
    }
    out << "</svg>\n";
    if (!out) throw IoError("write failed: " + path.string());
  }

private:
  static double round3(double v) { return std::round(v * 1000.0) / 1000.0; }

  std::string title_, x_label_, y_label_;
  std::vector<Series> series_;
};

}  // namespace ssmkit::io
