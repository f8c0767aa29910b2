#pragma once

// CSV input/output shared by the command-line tools: signal files for
// `decompose` and per-level coefficient files (coeffs_level{m}.csv) for
// coefficient-panel plots.

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "wisdom/errors.hpp"
#include "wisdom/signals.hpp"
#include "wisdom/wavelet.hpp"

namespace wisdom {

inline constexpr int kCoeffsSchemaVersion = 1;

inline std::string coeffs_schema_line() {
  return "# wisdom-coeffs schema_version=" + std::to_string(kCoeffsSchemaVersion);
}

/// A [T x C] table of doubles with column names.
struct Table {
  std::vector<std::string> columns;
  Tensor values;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    const auto b = cell.find_first_not_of(" \t\r");
    const auto e = cell.find_last_not_of(" \t\r");
    cells.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

inline bool parse_number(const std::string& s, double& out) {
  if (s.empty()) return false;
  try {
    std::size_t used = 0;
    out = std::stod(s, &used);
    return used == s.size();
  } catch (const std::exception&) {
    return false;
  }
}

}  // namespace detail

/// Reads a numeric CSV: optional header row, one column per channel, lines
/// starting with '#' and blank lines ignored.
inline Table read_signal_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParameterError("cannot open signal file '" + path.string() + "'");
  Table t;
  std::vector<double> data;
  std::size_t rows = 0, line_no = 0;
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto cells = detail::split_csv_line(line);
    std::vector<double> row(cells.size());
    bool numeric = true;
    for (std::size_t i = 0; i < cells.size(); ++i) numeric = numeric && detail::parse_number(cells[i], row[i]);
    if (!numeric) {
      if (rows == 0 && t.columns.empty()) {
        t.columns = cells;
        continue;
      }
      throw ParameterError(path.string() + ":" + std::to_string(line_no) + ": non-numeric value");
    }
    if (t.columns.empty() && rows == 0)
      for (std::size_t i = 0; i < row.size(); ++i) t.columns.push_back("c" + std::to_string(i));
    if (row.size() != t.columns.size())
      throw DimensionError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                           std::to_string(t.columns.size()) + " columns, got " + std::to_string(row.size()));
    data.insert(data.end(), row.begin(), row.end());
    ++rows;
  }
  if (rows == 0) throw ParameterError("signal file '" + path.string() + "' has no data rows");
  t.values = Tensor({rows, t.columns.size()}, std::move(data));
  return t;
}

/// Intermediate approximation u_m and detail g_m for every level m = 1..M.
struct LevelCoeffs {
  Tensor approximation;  ///< u_m
  Tensor detail;         ///< g_m
};

inline std::vector<LevelCoeffs> decompose_levels(const Tensor& z, const FilterBank& bank, std::size_t levels) {
  if (levels < 1) throw ParameterError("levels must be >= 1");
  if (levels >= 64 || z.rows() < (std::size_t{1} << levels))
    throw DecompositionError("sequence too short: length " + std::to_string(z.rows()) + " < 2^" + std::to_string(levels));
  std::vector<LevelCoeffs> out;
  Tensor u = z;
  for (std::size_t m = 0; m < levels; ++m) {
    auto lv = dwt_level(u, bank);
    out.push_back({lv.approximation, lv.detail});
    u = lv.approximation;
  }
  return out;
}

/// Writes coeffs_level{m}.csv (m = 1..M) into `dir`: a schema comment line,
/// then `index,u_<col>...,g_<col>...` with one row per coefficient.
inline void write_coeff_csvs(const std::filesystem::path& dir, const std::vector<LevelCoeffs>& levels,
                             const std::vector<std::string>& columns) {
  std::filesystem::create_directories(dir);
  for (std::size_t m = 0; m < levels.size(); ++m) {
    const auto& lv = levels[m];
    if (lv.approximation.cols() != columns.size()) throw DimensionError("write_coeff_csvs: column count mismatch");
    const auto path = dir / ("coeffs_level" + std::to_string(m + 1) + ".csv");
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ContractError("cannot write " + path.string());
    out << coeffs_schema_line() << "\nindex";
    for (const auto& c : columns) out << ",u_" << c;
    for (const auto& c : columns) out << ",g_" << c;
    out << "\n";
    char buf[32];
    auto num = [&](double x) {
      std::snprintf(buf, sizeof buf, "%.10g", x);
      return std::string(buf);
    };
    for (std::size_t j = 0; j < lv.approximation.rows(); ++j) {
      out << j;
      for (std::size_t c = 0; c < columns.size(); ++c) out << "," << num(lv.approximation.at(j, c));
      for (std::size_t c = 0; c < columns.size(); ++c) out << "," << num(lv.detail.at(j, c));
      out << "\n";
    }
  }
}

}  // namespace wisdom
