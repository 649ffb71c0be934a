#pragma once

#include <algorithm>
#include <sstream>
#include <string>
#include <vector>

#include "calprune/metrics.hpp"
#include "calprune/report.hpp"

namespace calprune {

struct SvgStyle {
  double width = 420.0;
  double height = 420.0;
  double margin = 50.0;
  std::string bar_fill = "#3b6ea8";
  std::string gap_fill = "#e0524b";
  std::string title;
};

namespace detail {

struct Plot {
  const SvgStyle& s;
  double inner_w() const { return s.width - 2 * s.margin; }
  double inner_h() const { return s.height - 2 * s.margin; }
  double px(double x) const { return s.margin + x * inner_w(); }
  double py(double y) const { return s.height - s.margin - y * inner_h(); }
};

inline void svg_open(std::ostringstream& os, const SvgStyle& s) {
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt6(s.width) << "\" height=\"" << fmt6(s.height)
     << "\" viewBox=\"0 0 " << fmt6(s.width) << ' ' << fmt6(s.height) << "\">\n";
  os << "<rect class=\"background\" x=\"0\" y=\"0\" width=\"" << fmt6(s.width) << "\" height=\"" << fmt6(s.height)
     << "\" fill=\"white\"/>\n";
}

inline void svg_axes(std::ostringstream& os, const Plot& p, const std::string& xlabel, const std::string& ylabel,
                     const std::string& title) {
  os << "<line class=\"axis\" x1=\"" << fmt6(p.px(0)) << "\" y1=\"" << fmt6(p.py(0)) << "\" x2=\"" << fmt6(p.px(1))
     << "\" y2=\"" << fmt6(p.py(0)) << "\" stroke=\"black\"/>\n";
  os << "<line class=\"axis\" x1=\"" << fmt6(p.px(0)) << "\" y1=\"" << fmt6(p.py(0)) << "\" x2=\"" << fmt6(p.px(0))
     << "\" y2=\"" << fmt6(p.py(1)) << "\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 5; ++t) {
    const double v = t / 5.0;
    os << "<text class=\"tick\" x=\"" << fmt6(p.px(v)) << "\" y=\"" << fmt6(p.py(0) + 16)
       << "\" font-size=\"10\" text-anchor=\"middle\">" << fmt6(v) << "</text>\n";
    os << "<text class=\"tick\" x=\"" << fmt6(p.px(0) - 6) << "\" y=\"" << fmt6(p.py(v) + 3)
       << "\" font-size=\"10\" text-anchor=\"end\">" << fmt6(v) << "</text>\n";
  }
  os << "<text class=\"label\" x=\"" << fmt6(p.px(0.5)) << "\" y=\"" << fmt6(p.s.height - 12)
     << "\" font-size=\"12\" text-anchor=\"middle\">" << xlabel << "</text>\n";
  os << "<text class=\"label\" x=\"14\" y=\"" << fmt6(p.py(0.5)) << "\" font-size=\"12\" text-anchor=\"middle\""
     << " transform=\"rotate(-90 14 " << fmt6(p.py(0.5)) << ")\">" << ylabel << "</text>\n";
  if (!title.empty()) {
    os << "<text class=\"title\" x=\"" << fmt6(p.px(0.5)) << "\" y=\"" << fmt6(p.s.margin / 2 + 4)
       << "\" font-size=\"13\" text-anchor=\"middle\">" << title << "</text>\n";
  }
}

}  // namespace detail

/// Reliability diagram: one bar per bin with height = bin accuracy, the gap to
/// the bin's mean confidence shaded, and the y = x reference diagonal.
inline std::string render_reliability_svg(const std::vector<ReliabilityRow>& rows, const SvgStyle& style = {}) {
  std::ostringstream os;
  const detail::Plot p{style};
  detail::svg_open(os, style);
  for (const auto& r : rows) {
    const double acc = r.accuracy.value_or(0.0);
    const double x = p.px(r.lower), w = p.px(r.upper) - p.px(r.lower);
    os << "<rect class=\"bar\" x=\"" << fmt6(x) << "\" y=\"" << fmt6(p.py(acc)) << "\" width=\"" << fmt6(w)
       << "\" height=\"" << fmt6(p.py(0) - p.py(acc)) << "\" data-count=\"" << r.count << "\" data-accuracy=\""
       << (r.accuracy ? fmt6(*r.accuracy) : "") << "\" data-confidence=\""
       << (r.confidence ? fmt6(*r.confidence) : "") << "\" fill=\"" << style.bar_fill
       << "\" stroke=\"white\"/>\n";
  }
  for (const auto& r : rows) {
    if (!r.confidence || !r.gap || *r.gap == 0.0) continue;
    const double lo = std::min(*r.accuracy, *r.confidence), hi = std::max(*r.accuracy, *r.confidence);
    const double x = p.px(r.lower), w = p.px(r.upper) - p.px(r.lower);
    os << "<rect class=\"gap\" x=\"" << fmt6(x) << "\" y=\"" << fmt6(p.py(hi)) << "\" width=\"" << fmt6(w)
       << "\" height=\"" << fmt6(p.py(lo) - p.py(hi)) << "\" fill=\"" << style.gap_fill
       << "\" fill-opacity=\"0.35\"/>\n";
  }
  os << "<line class=\"diagonal\" x1=\"" << fmt6(p.px(0)) << "\" y1=\"" << fmt6(p.py(0)) << "\" x2=\"" << fmt6(p.px(1))
     << "\" y2=\"" << fmt6(p.py(1)) << "\" stroke=\"gray\" stroke-dasharray=\"4 3\"/>\n";
  detail::svg_axes(os, p, "Confidence", "Accuracy", style.title);
  os << "</svg>\n";
  return os.str();
}

/// Confidence histogram: bar height = fraction of records in the bin.
inline std::string render_histogram_svg(const std::vector<HistogramRow>& rows, const SvgStyle& style = {}) {
  std::ostringstream os;
  const detail::Plot p{style};
  detail::svg_open(os, style);
  for (const auto& r : rows) {
    const double x = p.px(r.lower), w = p.px(r.upper) - p.px(r.lower);
    os << "<rect class=\"bar\" x=\"" << fmt6(x) << "\" y=\"" << fmt6(p.py(r.fraction)) << "\" width=\"" << fmt6(w)
       << "\" height=\"" << fmt6(p.py(0) - p.py(r.fraction)) << "\" data-count=\"" << r.count << "\" fill=\""
       << style.bar_fill << "\" stroke=\"white\"/>\n";
  }
  detail::svg_axes(os, p, "Confidence", "Fraction of samples", style.title);
  os << "</svg>\n";
  return os.str();
}

}  // namespace calprune
