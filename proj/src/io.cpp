#include "bartspl/io.hpp"

#include "bartspl/error.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace bartspl {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\"");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\"");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

RawTable parse_csv_table(std::istream& in, const std::string& source) {
  RawTable t;
  std::string line;
  if (!std::getline(in, line)) throw ValidationError(source + ": empty file (header required)");
  t.names = split_line(line);
  if (t.names.empty()) throw ValidationError(source + ": empty header");
  t.columns.resize(t.names.size());
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    const auto cells = split_line(line);
    if (cells.size() != t.names.size()) {
      throw ValidationError(source + ": row " + std::to_string(row) + " has " +
                            std::to_string(cells.size()) + " cells, header has " +
                            std::to_string(t.names.size()));
    }
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const auto& cell = cells[c];
      double value = std::numeric_limits<double>::quiet_NaN();
      if (!cell.empty() && cell != "NA" && cell != "NaN") {
        const char* first = cell.data();
        const char* last = first + cell.size();
        if (*first == '+') ++first;
        const auto [ptr, ec] = std::from_chars(first, last, value);
        if (ec != std::errc{} || ptr != last) {
          throw ValidationError(source + ": non-numeric cell '" + cell + "' in column '" +
                                t.names[c] + "' at row " + std::to_string(row));
        }
      }
      t.columns[c].push_back(value);
    }
  }
  return t;
}

RawTable read_csv_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open input file '" + path + "'");
  return parse_csv_table(in, path);
}

std::string format_double(double x) {
  if (std::isnan(x)) return "NA";
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, ptr);
}

}  // namespace bartspl
