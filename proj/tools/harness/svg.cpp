#include "harness/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iterator>
#include <limits>
#include <sstream>

#include "harness/csv.hpp"

namespace harness {

namespace {

const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

std::string xml_escape(const std::string& s) {
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

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

struct Axis {
  bool log = false;
  double lo = 0;
  double hi = 1;

  double map(double v) const { return log ? std::log10(v) : v; }
  double frac(double v) const { return (map(v) - map(lo)) / (map(hi) - map(lo)); }

  std::vector<double> ticks() const {
    std::vector<double> out;
    if (log) {
      for (double e = std::floor(std::log10(lo)); e <= std::ceil(std::log10(hi)); ++e) {
        const double v = std::pow(10.0, e);
        if (v >= lo * (1 - 1e-12) && v <= hi * (1 + 1e-12)) out.push_back(v);
      }
      if (out.size() < 2) out = {lo, hi};
      return out;
    }
    const double span = hi - lo;
    const double raw = span / 5;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    double step = mag;
    for (double m : {1.0, 2.0, 5.0, 10.0})
      if (m * mag >= raw) {
        step = m * mag;
        break;
      }
    for (double v = std::ceil(lo / step) * step; v <= hi + 1e-9 * span; v += step)
      out.push_back(std::abs(v) < 1e-12 * span ? 0.0 : v);
    return out;
  }
};

Axis fit_axis(const std::vector<const std::vector<double>*>& values, bool log) {
  Axis a{log, std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  for (const auto* vs : values)
    for (double v : *vs) {
      if (!std::isfinite(v) || (log && v <= 0)) continue;
      a.lo = std::min(a.lo, v);
      a.hi = std::max(a.hi, v);
    }
  if (!(a.lo <= a.hi)) {
    a.lo = log ? 1 : 0;
    a.hi = log ? 10 : 1;
  }
  if (a.lo == a.hi) {
    if (log) {
      a.lo /= 2;
      a.hi *= 2;
    } else {
      const double pad = a.lo == 0 ? 1 : std::abs(a.lo) * 0.1;
      a.lo -= pad;
      a.hi += pad;
    }
  } else if (!log) {
    const double pad = (a.hi - a.lo) * 0.05;
    a.lo -= pad;
    a.hi += pad;
  }
  return a;
}

}  // namespace

std::string LineChart::render() const {
  const double left = 80, right = 170, top = 40, bottom = 60;
  const double pw = width - left - right, ph = height - top - bottom;

  std::vector<const std::vector<double>*> xs, ys;
  for (const auto& s : series) {
    xs.push_back(&s.x);
    ys.push_back(&s.y);
  }
  const Axis ax = fit_axis(xs, log_x);
  const Axis ay = fit_axis(ys, log_y);
  auto px = [&](double v) { return left + ax.frac(v) * pw; };
  auto py = [&](double v) { return top + (1 - ay.frac(v)) * ph; };

  std::ostringstream o;
  o << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << fmt(width)
    << "\" height=\"" << fmt(height) << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << fmt(left + pw / 2) << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">"
    << xml_escape(title) << "</text>\n";
  o << "<rect x=\"" << fmt(left) << "\" y=\"" << fmt(top) << "\" width=\"" << fmt(pw)
    << "\" height=\"" << fmt(ph) << "\" fill=\"none\" stroke=\"black\"/>\n";

  for (double v : ax.ticks()) {
    const double x = px(v);
    o << "<line x1=\"" << fmt(x) << "\" y1=\"" << fmt(top + ph) << "\" x2=\"" << fmt(x)
      << "\" y2=\"" << fmt(top + ph + 5) << "\" stroke=\"black\"/>\n";
    o << "<text x=\"" << fmt(x) << "\" y=\"" << fmt(top + ph + 18)
      << "\" text-anchor=\"middle\">" << tick_label(v) << "</text>\n";
  }
  for (double v : ay.ticks()) {
    const double y = py(v);
    o << "<line x1=\"" << fmt(left - 5) << "\" y1=\"" << fmt(y) << "\" x2=\"" << fmt(left)
      << "\" y2=\"" << fmt(y) << "\" stroke=\"black\"/>\n";
    o << "<line x1=\"" << fmt(left) << "\" y1=\"" << fmt(y) << "\" x2=\"" << fmt(left + pw)
      << "\" y2=\"" << fmt(y) << "\" stroke=\"#dddddd\"/>\n";
    o << "<text x=\"" << fmt(left - 8) << "\" y=\"" << fmt(y + 4) << "\" text-anchor=\"end\">"
      << tick_label(v) << "</text>\n";
  }
  o << "<text x=\"" << fmt(left + pw / 2) << "\" y=\"" << fmt(height - 18)
    << "\" text-anchor=\"middle\">" << xml_escape(x_label) << "</text>\n";
  o << "<text transform=\"translate(20," << fmt(top + ph / 2)
    << ") rotate(-90)\" text-anchor=\"middle\">" << xml_escape(y_label) << "</text>\n";

  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& s = series[i];
    const std::string color = s.color.empty() ? kPalette[i % std::size(kPalette)] : s.color;
    o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\"";
    if (s.dashed) o << " stroke-dasharray=\"6,4\"";
    o << " points=\"";
    bool first = true;
    const std::size_t n = std::min(s.x.size(), s.y.size());
    for (std::size_t j = 0; j < n; ++j) {
      const double x = s.x[j], y = s.y[j];
      if (!std::isfinite(x) || !std::isfinite(y)) continue;
      if ((log_x && x <= 0) || (log_y && y <= 0)) continue;
      o << (first ? "" : " ") << fmt(px(x)) << "," << fmt(py(y));
      first = false;
    }
    o << "\"/>\n";
    const double ly = top + 14 + 18 * static_cast<double>(i);
    o << "<line x1=\"" << fmt(left + pw + 12) << "\" y1=\"" << fmt(ly) << "\" x2=\""
      << fmt(left + pw + 36) << "\" y2=\"" << fmt(ly) << "\" stroke=\"" << color
      << "\" stroke-width=\"2\"" << (s.dashed ? " stroke-dasharray=\"6,4\"" : "") << "/>\n";
    o << "<text x=\"" << fmt(left + pw + 42) << "\" y=\"" << fmt(ly + 4) << "\">"
      << xml_escape(s.name) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

}  // namespace harness
