#pragma once

// Minimal deterministic SVG line charts and histograms.

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace allin::svg {

struct Series {
  std::string name;
  std::vector<std::pair<double, double>> points;
  std::string color = "#1f77b4";
  double width = 1.5;
  double opacity = 1.0;
  bool dashed = false;
  bool in_legend = true;
};

struct HLine {
  double y = 1.0;
  std::string label;
  std::string color = "#444444";
  bool dashed = true;
};

struct Chart {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_x = false;
  bool log_y = false;
  std::optional<std::pair<double, double>> x_range;
  std::optional<std::pair<double, double>> y_range;
  std::vector<Series> series;
  std::vector<HLine> hlines;
  int width = 720;
  int height = 440;
};

std::string render(const Chart& chart);

struct Histogram {
  std::string title;
  std::string x_label;
  bool log_x = false;
  std::vector<double> values;
  int bins = 40;
  std::vector<HLine> vlines;  // drawn vertically at x = y field
  int width = 720;
  int height = 440;
};

std::string render(const Histogram& hist);

// Qualitative palette, cycled.
const std::string& palette(std::size_t i);

}  // namespace allin::svg
