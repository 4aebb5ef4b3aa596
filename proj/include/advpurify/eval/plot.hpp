#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace advpurify::eval {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

struct PlotOptions {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::optional<std::pair<double, double>> y_range;
  int width = 640;
  int height = 420;
};

// Static SVG line chart with markers and a legend. Deterministic output.
std::string line_plot_svg(const std::vector<Series>& series, const PlotOptions& options);
void save_line_plot(const std::filesystem::path& path, const std::vector<Series>& series, const PlotOptions& options);

}  // namespace advpurify::eval
