#include "allin/svg.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

namespace allin::svg {

namespace {

constexpr double kLeft = 70, kRight = 150, kTop = 40, kBottom = 55;

struct Axis {
  double lo = 0.0, hi = 1.0;
  bool log = false;

  double t(double v) const { return log ? std::log10(v) : v; }
  double frac(double v) const { return (t(v) - t(lo)) / (t(hi) - t(lo)); }
};

std::string esc(const std::string& s) {
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

std::string num(double v) { return fmt::format("{:.6g}", v); }

std::vector<double> ticks(const Axis& a) {
  std::vector<double> out;
  if (a.log) {
    const int e0 = static_cast<int>(std::floor(std::log10(a.lo)));
    const int e1 = static_cast<int>(std::ceil(std::log10(a.hi)));
    const int step = std::max(1, (e1 - e0) / 8);
    for (int e = e0; e <= e1; e += step) {
      const double v = std::pow(10.0, e);
      if (v >= a.lo * (1 - 1e-9) && v <= a.hi * (1 + 1e-9)) out.push_back(v);
      if (e1 - e0 <= 2) {
        for (double m : {2.0, 5.0}) {
          const double w = m * v;
          if (w >= a.lo && w <= a.hi) out.push_back(w);
        }
      }
    }
    std::sort(out.begin(), out.end());
    return out;
  }
  const double span = a.hi - a.lo;
  const double raw = span / 6.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 5.0, 10.0}) {
    step = m * mag;
    if (step >= raw) break;
  }
  for (double v = std::ceil(a.lo / step) * step; v <= a.hi + 1e-9 * span; v += step)
    out.push_back(std::abs(v) < 1e-12 * span ? 0.0 : v);
  return out;
}

Axis fit(double lo, double hi, bool log) {
  if (!(lo < hi)) {
    if (log) {
      lo = lo / 2.0;
      hi = hi * 2.0;
    } else {
      lo -= 1.0;
      hi += 1.0;
    }
  }
  if (log) {
    // pad by a fraction of a decade
    const double pad = (std::log10(hi) - std::log10(lo)) * 0.03;
    return {lo / std::pow(10.0, pad), hi * std::pow(10.0, pad), true};
  }
  const double pad = (hi - lo) * 0.03;
  return {lo - pad, hi + pad, false};
}

void frame(std::string& s, int w, int h, const std::string& title, const std::string& xl,
           const std::string& yl, const Axis& x, const Axis* y) {
  const double pw = w - kLeft - kRight, ph = h - kTop - kBottom;
  s += fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" viewBox=\"0 0 {} {}\" "
      "font-family=\"sans-serif\" font-size=\"11\">\n",
      w, h, w, h);
  s += fmt::format("<rect x=\"0\" y=\"0\" width=\"{}\" height=\"{}\" fill=\"white\"/>\n", w, h);
  s += fmt::format("<text x=\"{}\" y=\"22\" font-size=\"14\" text-anchor=\"middle\">{}</text>\n",
                   num(kLeft + pw / 2), esc(title));
  s += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#000\"/>\n",
                   num(kLeft), num(kTop), num(pw), num(ph));
  for (double v : ticks(x)) {
    const double px = kLeft + x.frac(v) * pw;
    s += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"#000\"/>\n", num(px),
                     num(kTop + ph), num(kTop + ph + 4));
    s += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n", num(px),
                     num(kTop + ph + 16), num(v));
  }
  if (y) {
    for (double v : ticks(*y)) {
      const double py = kTop + (1.0 - y->frac(v)) * ph;
      s += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\" stroke=\"#000\"/>\n",
                       num(kLeft - 4), num(py), num(kLeft));
      s += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\" stroke=\"#eee\"/>\n", num(kLeft),
                       num(py), num(kLeft + pw));
      s += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>\n", num(kLeft - 6),
                       num(py + 4), num(v));
    }
  }
  s += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n", num(kLeft + pw / 2),
                   num(h - 15), esc(xl));
  s += fmt::format(
      "<text x=\"16\" y=\"{0}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {0})\">{1}</text>\n",
      num(kTop + ph / 2), esc(yl));
}

bool usable(double v, bool log) { return std::isfinite(v) && (!log || v > 0.0); }

}  // namespace

const std::string& palette(std::size_t i) {
  static const std::array<std::string, 10> colors = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                                     "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
                                                     "#bcbd22", "#17becf"};
  return colors[i % colors.size()];
}

std::string render(const Chart& c) {
  double xlo = std::numeric_limits<double>::infinity(), xhi = -xlo, ylo = xlo, yhi = -xlo;
  for (const auto& s : c.series)
    for (const auto& [x, y] : s.points) {
      if (!usable(x, c.log_x) || !usable(y, c.log_y)) continue;
      xlo = std::min(xlo, x), xhi = std::max(xhi, x), ylo = std::min(ylo, y), yhi = std::max(yhi, y);
    }
  for (const auto& h : c.hlines)
    if (usable(h.y, c.log_y)) ylo = std::min(ylo, h.y), yhi = std::max(yhi, h.y);
  if (!std::isfinite(xlo)) xlo = c.log_x ? 1.0 : 0.0, xhi = c.log_x ? 10.0 : 1.0;
  if (!std::isfinite(ylo)) ylo = c.log_y ? 1.0 : 0.0, yhi = c.log_y ? 10.0 : 1.0;
  Axis x = c.x_range ? Axis{c.x_range->first, c.x_range->second, c.log_x} : fit(xlo, xhi, c.log_x);
  Axis y = c.y_range ? Axis{c.y_range->first, c.y_range->second, c.log_y} : fit(ylo, yhi, c.log_y);

  std::string s;
  frame(s, c.width, c.height, c.title, c.x_label, c.y_label, x, &y);
  const double pw = c.width - kLeft - kRight, ph = c.height - kTop - kBottom;
  auto px = [&](double v) { return kLeft + std::clamp(x.frac(v), 0.0, 1.0) * pw; };
  auto py = [&](double v) { return kTop + (1.0 - std::clamp(y.frac(v), 0.0, 1.0)) * ph; };

  for (const auto& h : c.hlines) {
    if (!usable(h.y, c.log_y)) continue;
    s += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\" stroke=\"{3}\"{4}/>\n", num(kLeft),
                     num(py(h.y)), num(kLeft + pw), h.color, h.dashed ? " stroke-dasharray=\"6,4\"" : "");
    if (!h.label.empty())
      s += fmt::format("<text x=\"{}\" y=\"{}\" fill=\"{}\">{}</text>\n", num(kLeft + pw + 4),
                       num(py(h.y) + 4), h.color, esc(h.label));
  }
  int legend = 0;
  for (const auto& ser : c.series) {
    std::string pts;
    for (const auto& [xv, yv] : ser.points) {
      if (!usable(xv, c.log_x) || !usable(yv, c.log_y)) continue;
      pts += num(px(xv)) + "," + num(py(yv)) + " ";
    }
    if (!pts.empty()) pts.pop_back();
    s += fmt::format(
        "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"{}\" stroke-opacity=\"{}\"{} points=\"{}\"/>\n",
        ser.color, num(ser.width), num(ser.opacity), ser.dashed ? " stroke-dasharray=\"4,3\"" : "", pts);
    if (ser.in_legend && !ser.name.empty()) {
      const double ly = kTop + 14.0 * legend + 10;
      s += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\" stroke=\"{3}\" stroke-width=\"2\"/>\n",
                       num(kLeft + pw + 8), num(ly), num(kLeft + pw + 24), ser.color);
      s += fmt::format("<text x=\"{}\" y=\"{}\">{}</text>\n", num(kLeft + pw + 28), num(ly + 4), esc(ser.name));
      ++legend;
    }
  }
  s += "</svg>\n";
  return s;
}

std::string render(const Histogram& h) {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (double v : h.values)
    if (usable(v, h.log_x)) lo = std::min(lo, v), hi = std::max(hi, v);
  for (const auto& l : h.vlines)
    if (usable(l.y, h.log_x)) lo = std::min(lo, l.y), hi = std::max(hi, l.y);
  if (!std::isfinite(lo)) lo = h.log_x ? 1.0 : 0.0, hi = h.log_x ? 10.0 : 1.0;
  const Axis x = fit(lo, hi, h.log_x);
  const int bins = std::max(1, h.bins);
  std::vector<int> counts(static_cast<std::size_t>(bins), 0);
  for (double v : h.values) {
    if (!usable(v, h.log_x)) continue;
    const int b = std::clamp(static_cast<int>(x.frac(v) * bins), 0, bins - 1);
    ++counts[static_cast<std::size_t>(b)];
  }
  const int top = std::max(1, *std::max_element(counts.begin(), counts.end()));
  Axis y{0.0, static_cast<double>(top) * 1.05, false};

  std::string s;
  frame(s, h.width, h.height, h.title, h.x_label, "count", x, &y);
  const double pw = h.width - kLeft - kRight, ph = h.height - kTop - kBottom;
  for (int b = 0; b < bins; ++b) {
    const double bh = ph * counts[static_cast<std::size_t>(b)] / y.hi;
    s += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"#9ecae1\" stroke=\"#3182bd\"/>\n",
                     num(kLeft + pw * b / bins), num(kTop + ph - bh), num(pw / bins), num(bh));
  }
  for (const auto& l : h.vlines) {
    if (!usable(l.y, h.log_x)) continue;
    const double px = kLeft + std::clamp(x.frac(l.y), 0.0, 1.0) * pw;
    s += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"{3}\"{4}/>\n", num(px), num(kTop),
                     num(kTop + ph), l.color, l.dashed ? " stroke-dasharray=\"6,4\"" : "");
    if (!l.label.empty())
      s += fmt::format("<text x=\"{}\" y=\"{}\" fill=\"{}\">{}</text>\n", num(px + 3), num(kTop + 12), l.color,
                       esc(l.label));
  }
  s += "</svg>\n";
  return s;
}

}  // namespace allin::svg
