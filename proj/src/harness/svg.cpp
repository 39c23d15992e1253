#include "flock/harness/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <sstream>

namespace flock::harness {

namespace {

constexpr double kWidth = 640.0;
constexpr double kHeight = 420.0;
constexpr double kLeft = 70.0;
constexpr double kRight = 150.0;
constexpr double kTop = 40.0;
constexpr double kBottom = 60.0;

const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                "#8c564b", "#e377c2", "#17becf", "#bcbd22", "#7f7f7f"};
constexpr std::size_t kPaletteSize = sizeof kPalette / sizeof kPalette[0];

std::string num(double v, int digits = 2) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string escape(const std::string& s) {
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

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();

  void include(double v) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  void finish() {
    if (!std::isfinite(lo)) lo = 0.0, hi = 1.0;
    if (hi - lo < 1e-12) {
      const double pad = std::abs(lo) > 0 ? std::abs(lo) * 0.1 : 1.0;
      lo -= pad;
      hi += pad;
    }
  }
  double map(double v, double a, double b) const { return a + (v - lo) / (hi - lo) * (b - a); }
};

void header(std::ostringstream& os, const std::string& title) {
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(kWidth, 0) << "\" height=\"" << num(kHeight, 0)
     << "\" viewBox=\"0 0 " << num(kWidth, 0) << ' ' << num(kHeight, 0) << "\" font-family=\"sans-serif\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << num(kWidth / 2) << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">" << escape(title)
     << "</text>\n";
}

void axes(std::ostringstream& os, const Range& xr, const Range& yr, const std::string& xl, const std::string& yl,
          bool x_ticks) {
  const double x0 = kLeft, x1 = kWidth - kRight, y0 = kHeight - kBottom, y1 = kTop;
  os << "<line x1=\"" << num(x0) << "\" y1=\"" << num(y0) << "\" x2=\"" << num(x1) << "\" y2=\"" << num(y0)
     << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << num(x0) << "\" y1=\"" << num(y0) << "\" x2=\"" << num(x0) << "\" y2=\"" << num(y1)
     << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double v = yr.lo + (yr.hi - yr.lo) * i / 4.0;
    const double y = yr.map(v, y0, y1);
    os << "<line x1=\"" << num(x0 - 4) << "\" y1=\"" << num(y) << "\" x2=\"" << num(x0) << "\" y2=\"" << num(y)
       << "\" stroke=\"black\"/>\n";
    os << "<text x=\"" << num(x0 - 8) << "\" y=\"" << num(y + 4) << "\" text-anchor=\"end\" font-size=\"11\">"
       << num(v, 3) << "</text>\n";
    if (x_ticks) {
      const double xv = xr.lo + (xr.hi - xr.lo) * i / 4.0;
      const double x = xr.map(xv, x0, x1);
      os << "<line x1=\"" << num(x) << "\" y1=\"" << num(y0) << "\" x2=\"" << num(x) << "\" y2=\"" << num(y0 + 4)
         << "\" stroke=\"black\"/>\n";
      os << "<text x=\"" << num(x) << "\" y=\"" << num(y0 + 18) << "\" text-anchor=\"middle\" font-size=\"11\">"
         << num(xv, 1) << "</text>\n";
    }
  }
  os << "<text x=\"" << num((x0 + x1) / 2) << "\" y=\"" << num(kHeight - 18)
     << "\" text-anchor=\"middle\" font-size=\"13\">" << escape(xl) << "</text>\n";
  os << "<text x=\"18\" y=\"" << num((y0 + y1) / 2) << "\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 18 "
     << num((y0 + y1) / 2) << ")\">" << escape(yl) << "</text>\n";
}

}  // namespace

std::string render_line_plot(const LinePlot& plot) {
  std::ostringstream os;
  header(os, plot.title);
  os << "<!-- data: series,x,y\n";
  for (const auto& s : plot.series)
    for (std::size_t i = 0; i < s.x.size(); ++i) os << escape(s.name) << ',' << num(s.x[i], 6) << ',' << num(s.y[i], 6) << '\n';
  os << "-->\n";
  Range xr, yr;
  for (const auto& s : plot.series) {
    for (double v : s.x) xr.include(v);
    for (double v : s.y) yr.include(v);
  }
  xr.finish();
  yr.finish();
  axes(os, xr, yr, plot.x_label, plot.y_label, true);
  const double x0 = kLeft, x1 = kWidth - kRight, y0 = kHeight - kBottom, y1 = kTop;
  for (std::size_t k = 0; k < plot.series.size(); ++k) {
    const auto& s = plot.series[k];
    const char* colour = kPalette[k % kPaletteSize];
    os << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i)
      os << (i ? " " : "") << num(xr.map(s.x[i], x0, x1)) << ',' << num(yr.map(s.y[i], y0, y1));
    os << "\"/>\n";
    for (std::size_t i = 0; i < s.x.size(); ++i)
      os << "<circle cx=\"" << num(xr.map(s.x[i], x0, x1)) << "\" cy=\"" << num(yr.map(s.y[i], y0, y1))
         << "\" r=\"3\" fill=\"" << colour << "\"/>\n";
    const double ly = kTop + 10 + 20.0 * static_cast<double>(k);
    os << "<line x1=\"" << num(x1 + 15) << "\" y1=\"" << num(ly) << "\" x2=\"" << num(x1 + 35) << "\" y2=\""
       << num(ly) << "\" stroke=\"" << colour << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << num(x1 + 40) << "\" y=\"" << num(ly + 4) << "\" font-size=\"12\">" << escape(s.name)
       << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

std::string render_bar_chart(const BarChart& chart) {
  std::ostringstream os;
  header(os, chart.title);
  os << "<!-- data: label,value\n";
  for (std::size_t i = 0; i < chart.labels.size(); ++i)
    os << escape(chart.labels[i]) << ',' << num(chart.values[i], 6) << '\n';
  os << "-->\n";
  Range xr, yr;
  xr.include(0);
  xr.include(static_cast<double>(chart.values.size()));
  yr.include(0);
  for (double v : chart.values) yr.include(v);
  xr.finish();
  yr.finish();
  axes(os, xr, yr, chart.x_label, chart.y_label, false);
  const double x0 = kLeft, x1 = kWidth - kRight, y0 = kHeight - kBottom, y1 = kTop;
  const double slot = chart.values.empty() ? 0.0 : (x1 - x0) / static_cast<double>(chart.values.size());
  const std::size_t label_every = std::max<std::size_t>(1, chart.values.size() / 12);
  for (std::size_t i = 0; i < chart.values.size(); ++i) {
    const double x = x0 + slot * static_cast<double>(i);
    const double top = yr.map(chart.values[i], y0, y1);
    os << "<rect x=\"" << num(x + slot * 0.1) << "\" y=\"" << num(top) << "\" width=\"" << num(slot * 0.8)
       << "\" height=\"" << num(y0 - top) << "\" fill=\"" << kPalette[0] << "\"/>\n";
    if (i % label_every == 0)
      os << "<text x=\"" << num(x + slot / 2) << "\" y=\"" << num(y0 + 16)
         << "\" text-anchor=\"middle\" font-size=\"10\">" << escape(chart.labels[i]) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

std::string render_scene(const SceneBin& bin, const FlockSet& flocks) {
  std::map<AgentId, int> colour_of;
  for (std::size_t k = 0; k < flocks.flocks.size(); ++k)
    for (AgentId id : flocks.flocks[k]) colour_of[id] = static_cast<int>(k);

  std::ostringstream os;
  header(os, "Scene bin " + std::to_string(bin.bin_index) + ": " + std::to_string(flocks.flocks.size()) +
                 " flocks, " + std::to_string(flocks.singletons.size()) + " singletons");
  os << "<!-- data: agent,flock\n";
  for (const auto& b : bin.blocks) {
    const auto it = colour_of.find(b.agent_id);
    os << b.agent_id << ',' << (it == colour_of.end() ? -1 : it->second) << '\n';
  }
  os << "-->\n";
  Range xr, yr;
  for (const auto& b : bin.blocks)
    for (const auto& p : b.points) {
      xr.include(p.x_mm / 1000.0);
      yr.include(p.y_mm / 1000.0);
    }
  xr.finish();
  yr.finish();
  axes(os, xr, yr, "x [m]", "y [m]", true);
  const double x0 = kLeft, x1 = kWidth - kRight, y0 = kHeight - kBottom, y1 = kTop;
  for (const auto& b : bin.blocks) {
    const auto it = colour_of.find(b.agent_id);
    const char* colour = it == colour_of.end() ? "#bbbbbb" : kPalette[static_cast<std::size_t>(it->second) % kPaletteSize];
    os << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < b.points.size(); ++i)
      os << (i ? " " : "") << num(xr.map(b.points[i].x_mm / 1000.0, x0, x1)) << ','
         << num(yr.map(b.points[i].y_mm / 1000.0, y0, y1));
    os << "\"/>\n";
  }
  os << "</svg>\n";
  return os.str();
}

namespace {

std::string plot_by_arch(const CsvTable& summary, const std::string& value_column, const std::string& title,
                         const std::string& y_label) {
  std::map<std::string, Series> by_arch;
  for (std::size_t r = 0; r < summary.rows.size(); ++r) {
    auto& s = by_arch[summary.text(r, "arch")];
    s.name = summary.text(r, "arch");
    s.x.push_back(summary.number(r, "sequence_length"));
    s.y.push_back(summary.number(r, value_column));
  }
  LinePlot plot{title, "sequence length", y_label, {}};
  for (auto& [name, s] : by_arch) {
    std::vector<std::size_t> idx(s.x.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return s.x[a] < s.x[b]; });
    Series sorted{s.name, {}, {}};
    for (std::size_t i : idx) {
      sorted.x.push_back(s.x[i]);
      sorted.y.push_back(s.y[i]);
    }
    plot.series.push_back(std::move(sorted));
  }
  return render_line_plot(plot);
}

}  // namespace

std::string plot_accuracy_vs_length(const CsvTable& summary) {
  return plot_by_arch(summary, "mean_accuracy", "Prediction accuracy by sequence length", "mean test accuracy");
}

std::string plot_runtime_vs_length(const CsvTable& summary) {
  return plot_by_arch(summary, "mean_wall_time_s", "Training time by sequence length", "mean wall time [s]");
}

std::string plot_members_per_bin(const CsvTable& bins) {
  BarChart chart{"Pedestrians per time bin", "time bin", "members", {}, {}};
  for (std::size_t r = 0; r < bins.rows.size(); ++r) {
    chart.labels.push_back(bins.text(r, "bin_index"));
    chart.values.push_back(bins.number(r, "member_count"));
  }
  return render_bar_chart(chart);
}

}  // namespace flock::harness
