#pragma once

#include <string>
#include <vector>

#include "flock/aggregate.hpp"
#include "flock/harness/csv.hpp"
#include "flock/scene.hpp"

namespace flock::harness {

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

struct LinePlot {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<Series> series;
};

struct BarChart {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<std::string> labels;
  std::vector<double> values;
};

/// Standalone SVG documents. Output depends only on the arguments, and the
/// plotted values are repeated in a leading comment.
std::string render_line_plot(const LinePlot& plot);
std::string render_bar_chart(const BarChart& chart);

/// Member tracks of one bin, one colour per flock, singletons in grey.
std::string render_scene(const SceneBin& bin, const FlockSet& flocks);

/// From a grid summary table (arch, sequence_length, mean_accuracy,
/// mean_wall_time_s).
std::string plot_accuracy_vs_length(const CsvTable& summary);
std::string plot_runtime_vs_length(const CsvTable& summary);

/// From a bins table (bin_index, member_count).
std::string plot_members_per_bin(const CsvTable& bins);

}  // namespace flock::harness
