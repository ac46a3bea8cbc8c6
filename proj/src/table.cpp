#include "bnhp/table.hpp"

#include <algorithm>
#include <charconv>
#include <istream>

#include "bnhp/error.hpp"

namespace bnhp {

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  for (auto& f : out) {
    while (!f.empty() && (f.back() == '\r' || f.back() == ' ')) f.pop_back();
    f.erase(0, f.find_first_not_of(' '));
  }
  return out;
}

}  // namespace

std::size_t CsvTable::column(const std::string& name) const {
  auto it = std::find(header.begin(), header.end(), name);
  require(it != header.end(), ErrorKind::SchemaError, "missing column '" + name + "'");
  return static_cast<std::size_t>(it - header.begin());
}

bool CsvTable::has_column(const std::string& name) const {
  return std::find(header.begin(), header.end(), name) != header.end();
}

double CsvTable::number(std::size_t row, std::size_t col) const {
  const std::string& f = rows.at(row).at(col);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
  require(ec == std::errc() && ptr == f.data() + f.size(), ErrorKind::ParseError,
          "data row " + std::to_string(row + 1) + ": bad " + header[col] + " value '" + f + "'");
  return v;
}

CsvTable read_table(std::istream& in) {
  CsvTable t;
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorKind::SchemaError, "empty table, no header");
  t.header = split(line);
  std::size_t n = 1;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty() || line == "\r") continue;
    auto fields = split(line);
    require(fields.size() == t.header.size(), ErrorKind::ParseError,
            "line " + std::to_string(n) + ": expected " + std::to_string(t.header.size()) + " fields, got " +
                std::to_string(fields.size()));
    t.rows.push_back(std::move(fields));
  }
  return t;
}

}  // namespace bnhp
