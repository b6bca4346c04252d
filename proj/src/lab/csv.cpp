#include "pflab/lab/csv.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "pflab/errors.hpp"

namespace pflab::lab {

std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

CsvWriter::CsvWriter(std::vector<std::string> header) : header_(std::move(header)) {}

CsvWriter& CsvWriter::cell(const std::string& s) {
  if (s.find_first_of(",\n") != std::string::npos) throw ConfigError("csv: cell contains a separator: " + s);
  current_.push_back(s);
  return *this;
}

CsvWriter& CsvWriter::cell(double x) { return cell(format_double(x)); }

CsvWriter& CsvWriter::cell(std::uint64_t x) { return cell(std::to_string(x)); }

void CsvWriter::end_row() {
  if (current_.size() != header_.size()) {
    throw ConfigError("csv: row has " + std::to_string(current_.size()) + " cells, header has " +
                      std::to_string(header_.size()));
  }
  rows_.push_back(std::move(current_));
  current_.clear();
}

std::string CsvWriter::str() const {
  std::string out;
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out += ',';
      out += cells[i];
    }
    out += '\n';
  };
  line(header_);
  for (const auto& r : rows_) line(r);
  return out;
}

void CsvWriter::write(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  out << str();
  if (!out) throw ConfigError("write failed for '" + path + "'");
}

std::size_t CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return i;
  }
  throw ConfigError("csv: missing column '" + name + "'");
}

bool CsvTable::has_column(const std::string& name) const {
  for (const auto& h : header) {
    if (h == name) return true;
  }
  return false;
}

std::vector<double> CsvTable::numbers(const std::string& name) const {
  const std::size_t c = column(name);
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& r : rows) {
    const std::string& s = r.at(c);
    if (s == "nan") {
      out.push_back(NAN);
    } else if (s == "inf") {
      out.push_back(INFINITY);
    } else if (s == "-inf") {
      out.push_back(-INFINITY);
    } else {
      try {
        out.push_back(std::stod(s));
      } catch (const std::exception&) {
        throw ConfigError("csv: column '" + name + "' holds non-numeric '" + s + "'");
      }
    }
  }
  return out;
}

std::vector<std::string> CsvTable::strings(const std::string& name) const {
  const std::size_t c = column(name);
  std::vector<std::string> out;
  for (const auto& r : rows) out.push_back(r.at(c));
  return out;
}

CsvTable parse_csv(std::istream& is) {
  CsvTable t;
  std::string line;
  bool first = true;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    if (first) {
      t.header = std::move(cells);
      first = false;
    } else {
      if (cells.size() != t.header.size()) throw ConfigError("csv: ragged row: " + line);
      t.rows.push_back(std::move(cells));
    }
  }
  if (first) throw ConfigError("csv: no header");
  return t;
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  return parse_csv(in);
}

}  // namespace pflab::lab
