#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

// Minimal deterministic SVG output: stacked line panels and an error-bar chart.
namespace vsnmpc::svg {

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

inline std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

struct Series {
  std::string label;
  std::vector<double> y;
  std::string color = "#1f77b4";
};

struct Panel {
  std::string title;
  std::vector<Series> series;
  std::vector<double> reference_lines;  // horizontal guides, e.g. 0 or 1
};

inline std::string line_panels(const std::string& title, const std::vector<double>& x, const std::vector<Panel>& panels) {
  const double w = 720.0;
  const double ph = 150.0;
  const double left = 70.0;
  const double right = 20.0;
  const double top = 40.0;
  const double gap = 30.0;
  const double h = top + panels.size() * (ph + gap) + 20.0;
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(w) << "\" height=\"" << num(h)
     << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << num(w / 2) << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << escape(title)
     << "</text>\n";
  const double x0 = x.empty() ? 0.0 : x.front();
  const double x1 = x.empty() ? 1.0 : std::max(x.back(), x0 + 1e-9);
  for (std::size_t p = 0; p < panels.size(); ++p) {
    const Panel& pn = panels[p];
    const double py = top + p * (ph + gap);
    double lo = 0.0;
    double hi = 0.0;
    bool first = true;
    auto widen = [&](double v) {
      if (!std::isfinite(v)) return;
      if (first) {
        lo = hi = v;
        first = false;
      }
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    };
    for (const auto& s : pn.series)
      for (double v : s.y) widen(v);
    for (double r : pn.reference_lines) widen(r);
    if (hi - lo < 1e-12) {
      lo -= 0.5;
      hi += 0.5;
    }
    const double pad = 0.05 * (hi - lo);
    lo -= pad;
    hi += pad;
    auto sx = [&](double v) { return left + (v - x0) / (x1 - x0) * (w - left - right); };
    auto sy = [&](double v) { return py + ph - (v - lo) / (hi - lo) * ph; };
    os << "<rect x=\"" << num(left) << "\" y=\"" << num(py) << "\" width=\"" << num(w - left - right)
       << "\" height=\"" << num(ph) << "\" fill=\"none\" stroke=\"#888\"/>\n";
    os << "<text x=\"" << num(left + 4) << "\" y=\"" << num(py + 12) << "\">" << escape(pn.title) << "</text>\n";
    os << "<text x=\"" << num(left - 4) << "\" y=\"" << num(py + 10) << "\" text-anchor=\"end\">" << num(hi)
       << "</text>\n";
    os << "<text x=\"" << num(left - 4) << "\" y=\"" << num(py + ph) << "\" text-anchor=\"end\">" << num(lo)
       << "</text>\n";
    for (double r : pn.reference_lines) {
      os << "<line x1=\"" << num(left) << "\" x2=\"" << num(w - right) << "\" y1=\"" << num(sy(r)) << "\" y2=\""
         << num(sy(r)) << "\" stroke=\"#bbb\" stroke-dasharray=\"4 3\"/>\n";
    }
    double legend_x = w - right - 4;
    for (auto it = pn.series.rbegin(); it != pn.series.rend(); ++it) {
      os << "<text x=\"" << num(legend_x) << "\" y=\"" << num(py + 12) << "\" text-anchor=\"end\" fill=\""
         << it->color << "\">" << escape(it->label) << "</text>\n";
      legend_x -= 8.0 * static_cast<double>(it->label.size()) + 12.0;
    }
    for (const auto& s : pn.series) {
      os << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.2\" points=\"";
      const std::size_t n = std::min(x.size(), s.y.size());
      for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(s.y[i])) continue;
        os << num(sx(x[i])) << ',' << num(sy(s.y[i])) << (i + 1 < n ? " " : "");
      }
      os << "\"/>\n";
    }
  }
  os << "<text x=\"" << num(w / 2) << "\" y=\"" << num(h - 4) << "\" text-anchor=\"middle\">t [s] ("
     << num(x0) << " .. " << num(x1) << ")</text>\n";
  os << "</svg>\n";
  return os.str();
}

struct Bar {
  std::string label;
  double mean = 0.0;
  double std = 0.0;
  double min = 0.0;
  double max = 0.0;
};

// One bar per entry: mean with a +-std box and min/max whiskers. Each bar is scaled to its own
// maximum since the quantities have different units.
inline std::string bar_chart(const std::string& title, const std::vector<Bar>& bars) {
  const double bw = 110.0;
  const double w = 60.0 + bw * bars.size();
  const double h = 320.0;
  const double top = 50.0;
  const double base = h - 50.0;
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(w) << "\" height=\"" << num(h)
     << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << num(w / 2) << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << escape(title)
     << "</text>\n";
  os << "<line x1=\"30\" x2=\"" << num(w - 20) << "\" y1=\"" << num(base) << "\" y2=\"" << num(base)
     << "\" stroke=\"#444\"/>\n";
  for (std::size_t i = 0; i < bars.size(); ++i) {
    const Bar& b = bars[i];
    const double top_val = std::max({b.max, b.mean + b.std, 1e-300});
    auto sy = [&](double v) { return base - std::max(0.0, v) / top_val * (base - top); };
    const double cx = 40.0 + bw * (i + 0.5);
    os << "<rect x=\"" << num(cx - 25) << "\" y=\"" << num(sy(b.mean)) << "\" width=\"50\" height=\""
       << num(base - sy(b.mean)) << "\" fill=\"#9ecae1\" stroke=\"#3182bd\"/>\n";
    os << "<rect x=\"" << num(cx - 8) << "\" y=\"" << num(sy(b.mean + b.std)) << "\" width=\"16\" height=\""
       << num(sy(b.mean - b.std) - sy(b.mean + b.std)) << "\" fill=\"none\" stroke=\"#08519c\"/>\n";
    os << "<line x1=\"" << num(cx) << "\" x2=\"" << num(cx) << "\" y1=\"" << num(sy(b.min)) << "\" y2=\""
       << num(sy(b.max)) << "\" stroke=\"#333\"/>\n";
    for (double v : {b.min, b.max}) {
      os << "<line x1=\"" << num(cx - 6) << "\" x2=\"" << num(cx + 6) << "\" y1=\"" << num(sy(v)) << "\" y2=\""
         << num(sy(v)) << "\" stroke=\"#333\"/>\n";
    }
    os << "<text x=\"" << num(cx) << "\" y=\"" << num(base + 16) << "\" text-anchor=\"middle\">" << escape(b.label)
       << "</text>\n";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3g", b.mean);
    os << "<text x=\"" << num(cx) << "\" y=\"" << num(base + 30) << "\" text-anchor=\"middle\" fill=\"#555\">mean "
       << buf << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace vsnmpc::svg
