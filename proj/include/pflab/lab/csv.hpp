#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace pflab::lab {

/// 17 significant digits; "nan", "inf" and "-inf" for non-finite values.
std::string format_double(double x);

/// Comma separated rows with '\n' endings and no quoting.
class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header);

  CsvWriter& cell(const std::string& s);
  CsvWriter& cell(const char* s) { return cell(std::string(s)); }
  CsvWriter& cell(double x);
  CsvWriter& cell(std::uint64_t x);
  CsvWriter& cell(int x) { return cell(static_cast<std::uint64_t>(x)); }
  void end_row();

  const std::vector<std::string>& header() const { return header_; }
  std::size_t row_count() const { return rows_.size(); }
  std::string str() const;
  void write(const std::string& path) const;

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
  std::vector<std::string> current_;
};

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Index of a column; throws ConfigError naming it if absent.
  std::size_t column(const std::string& name) const;
  bool has_column(const std::string& name) const;
  std::vector<double> numbers(const std::string& name) const;
  std::vector<std::string> strings(const std::string& name) const;
};

CsvTable parse_csv(std::istream& is);
CsvTable read_csv(const std::string& path);

}  // namespace pflab::lab
