#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <stdexcept>

#include "odyn/cli.hpp"

namespace odyn::cli {

namespace fs = std::filesystem;

namespace {

constexpr const char* palette[] = {"#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f",
                                   "#edc948", "#b07aa1", "#ff9da7", "#9c755f", "#bab0ac"};

std::string escape(const std::string& s) {
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

template <typename T>
std::size_t index_of(std::vector<T>& order, const T& key) {
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (order[i] == key) return i;
  }
  order.push_back(key);
  return order.size() - 1;
}

}  // namespace

std::string bar_chart_svg(std::span<const pipeline::EvalReport> reports) {
  if (reports.empty()) throw std::invalid_argument("plot: no report rows");
  // Groups and series keep their first-appearance order.
  std::vector<std::string> groups, series;
  std::map<std::pair<std::size_t, std::size_t>, double> value;
  for (const auto& r : reports) {
    if (!(r.mean_iou >= 0.0 && r.mean_iou <= 1.0)) throw std::invalid_argument("plot: mean IoU outside [0, 1]");
    const std::size_t g = index_of(groups, r.dataset);
    const std::size_t s = index_of(series, r.variant + " (n=" + std::to_string(r.horizon) + ")");
    value[{g, s}] = r.mean_iou;
  }

  const double bar = 18, gap = 24, left = 60, top = 30, plot_h = 300, legend_w = 200;
  const double group_w = static_cast<double>(series.size()) * bar + gap;
  const double plot_w = static_cast<double>(groups.size()) * group_w + gap;
  const double width = left + plot_w + legend_w, height = top + plot_h + 70;
  auto y_of = [&](double v) { return top + plot_h * (1.0 - v); };

  std::ostringstream svg;
  svg << std::fixed << std::setprecision(2);
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << ' ' << height << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (int tick = 0; tick <= 5; ++tick) {
    const double v = tick / 5.0, y = y_of(v);
    svg << "<line x1=\"" << left << "\" y1=\"" << y << "\" x2=\"" << left + plot_w << "\" y2=\"" << y
        << "\" stroke=\"#dddddd\"/>\n";
    svg << "<text x=\"" << left - 6 << "\" y=\"" << y + 4 << "\" text-anchor=\"end\">" << std::setprecision(1) << v
        << std::setprecision(2) << "</text>\n";
  }
  svg << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + plot_h
      << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << left << "\" y1=\"" << top + plot_h << "\" x2=\"" << left + plot_w << "\" y2=\""
      << top + plot_h << "\" stroke=\"black\"/>\n";
  svg << "<text x=\"16\" y=\"" << top + plot_h / 2 << "\" transform=\"rotate(-90 16 " << top + plot_h / 2
      << ")\" text-anchor=\"middle\">mean IoU</text>\n";

  for (std::size_t g = 0; g < groups.size(); ++g) {
    const double x0 = left + gap + static_cast<double>(g) * group_w;
    for (std::size_t s = 0; s < series.size(); ++s) {
      const auto it = value.find({g, s});
      if (it == value.end()) continue;
      const double x = x0 + static_cast<double>(s) * bar, y = y_of(it->second);
      svg << "<rect class=\"bar\" x=\"" << x << "\" y=\"" << y << "\" width=\"" << bar - 2 << "\" height=\""
          << top + plot_h - y << "\" fill=\"" << palette[s % std::size(palette)] << "\"><title>"
          << escape(groups[g]) << ", " << escape(series[s]) << ": " << std::setprecision(4) << it->second
          << std::setprecision(2) << "</title></rect>\n";
    }
    svg << "<text x=\"" << x0 + static_cast<double>(series.size()) * bar / 2 << "\" y=\"" << top + plot_h + 18
        << "\" text-anchor=\"middle\">" << escape(groups[g]) << "</text>\n";
  }
  for (std::size_t s = 0; s < series.size(); ++s) {
    const double x = left + plot_w + 16, y = top + 14 * static_cast<double>(s);
    svg << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"10\" height=\"10\" fill=\""
        << palette[s % std::size(palette)] << "\"/>\n";
    svg << "<text x=\"" << x + 14 << "\" y=\"" << y + 9 << "\">" << escape(series[s]) << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

void write_bar_chart(std::span<const pipeline::EvalReport> reports, const fs::path& path) {
  const std::string svg = bar_chart_svg(reports);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << svg;
  if (!out) throw sim::IoError(path.string() + ": cannot write chart");
}

}  // namespace odyn::cli
