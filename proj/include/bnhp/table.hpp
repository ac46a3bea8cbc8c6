#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

namespace bnhp {

/// Header-addressed comma-separated table (no quoting), for the tool's own
/// output formats.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Column index; SchemaError naming the column when absent.
  std::size_t column(const std::string& name) const;
  bool has_column(const std::string& name) const;
  /// ParseError with the data line number when the cell is not a number.
  double number(std::size_t row, std::size_t col) const;
};

CsvTable read_table(std::istream& in);

}  // namespace bnhp
