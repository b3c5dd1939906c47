#include <cstdio>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>

#include "odyn/pipeline.hpp"

namespace odyn::pipeline {

namespace fs = std::filesystem;

namespace {

void require_plain(const std::string& field, const char* what) {
  if (field.find_first_of(",\n\r\"") != std::string::npos) {
    throw std::invalid_argument(std::string("report ") + what + " '" + field + "' contains a comma, quote or newline");
  }
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

template <typename T>
T parse_number(const std::string& s, const fs::path& path, std::size_t line, const char* column) {
  std::istringstream in(s);
  T v{};
  in >> v;
  if (!in || !in.eof()) {
    throw sim::IoError(path.string() + ":" + std::to_string(line) + ": bad " + column + " '" + s + "'");
  }
  return v;
}

}  // namespace

std::string report_csv_row(const EvalReport& r) {
  require_plain(r.dataset, "dataset");
  require_plain(r.variant, "variant");
  std::ostringstream out;
  out << r.dataset << ',' << r.variant << ',' << r.horizon << ','
      << std::setprecision(std::numeric_limits<double>::max_digits10) << r.mean_iou << ',' << r.n_items << ','
      << r.seed;
  return out.str();
}

void write_report_csv(std::span<const EvalReport> reports, const fs::path& path) {
  std::ostringstream body;
  body << report_csv_header << '\n';
  for (const auto& r : reports) body << report_csv_row(r) << '\n';
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << body.str();
  if (!out) throw sim::IoError(path.string() + ": cannot write report");
}

std::vector<EvalReport> read_report_csv(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw sim::IoError(path.string() + ": cannot open report");
  std::string line;
  if (!std::getline(in, line)) throw sim::IoError(path.string() + ": empty report file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != report_csv_header) {
    throw sim::IoError(path.string() + ": header is '" + line + "', expected '" + report_csv_header + "'");
  }
  std::vector<EvalReport> out;
  std::size_t number = 1;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split(line);
    if (cells.size() != 6) {
      throw sim::IoError(path.string() + ":" + std::to_string(number) + ": expected 6 columns, found " +
                         std::to_string(cells.size()));
    }
    EvalReport r;
    r.dataset = cells[0];
    r.variant = cells[1];
    r.horizon = parse_number<std::size_t>(cells[2], path, number, "horizon");
    r.mean_iou = parse_number<double>(cells[3], path, number, "mean_iou");
    r.n_items = parse_number<std::size_t>(cells[4], path, number, "n_items");
    r.seed = parse_number<std::uint64_t>(cells[5], path, number, "seed");
    if (r.dataset.empty() || r.variant.empty()) {
      throw sim::IoError(path.string() + ":" + std::to_string(number) + ": empty dataset or variant");
    }
    if (!(r.mean_iou >= 0.0 && r.mean_iou <= 1.0)) {
      throw sim::IoError(path.string() + ":" + std::to_string(number) + ": mean_iou outside [0, 1]");
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::string report_table(std::span<const EvalReport> reports) {
  std::ostringstream out;
  out << std::left << std::setw(16) << "dataset" << std::setw(18) << "variant" << std::right << std::setw(8)
      << "horizon" << std::setw(10) << "mean_iou" << std::setw(9) << "items" << std::setw(8) << "seed"
      << "  per-step IoU\n";
  for (const auto& r : reports) {
    out << std::left << std::setw(16) << r.dataset << std::setw(18) << r.variant << std::right << std::setw(8)
        << r.horizon << std::setw(10) << std::fixed << std::setprecision(4) << r.mean_iou << std::setw(9)
        << r.n_items << std::setw(8) << r.seed << " ";
    if (r.per_step_iou.empty()) out << " -";
    for (double v : r.per_step_iou) out << ' ' << v;
    out << '\n';
    if (!r.per_object_count.empty()) {
      out << std::setw(16) << "" << "  by object count:";
      for (const auto& [n, v] : r.per_object_count) out << " N=" << n << ' ' << v;
      out << '\n';
    }
    out.unsetf(std::ios::fixed);
  }
  return out.str();
}

}  // namespace odyn::pipeline
