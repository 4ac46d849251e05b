#include "csv.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "gridsite/error.hpp"

namespace gridsite::detail {

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

CsvTable CsvTable::read(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  CsvTable t;
  t.path_ = path;
  std::string line;
  bool header = true;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    auto fields = split(line);
    if (header) {
      for (std::size_t i = 0; i < fields.size(); ++i) t.index_[fields[i]] = i;
      width = fields.size();
      header = false;
      continue;
    }
    if (fields.size() != width) {
      throw Error(ErrorKind::Schema, path.string() + ": row " + std::to_string(t.cells_.size() + 1) + " has " +
                                         std::to_string(fields.size()) + " fields, expected " + std::to_string(width));
    }
    t.cells_.push_back(std::move(fields));
  }
  if (header) throw Error(ErrorKind::Schema, path.string() + ": missing header row");
  return t;
}

const std::string& CsvTable::cell(std::size_t row, const std::string& column) const {
  auto it = index_.find(column);
  if (it == index_.end()) throw Error(ErrorKind::Schema, path_.string() + ": missing column '" + column + "'");
  return cells_[row][it->second];
}

double CsvTable::number(std::size_t row, const std::string& column) const {
  const std::string& s = cell(row, column);
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorKind::Schema,
                path_.string() + ": column '" + column + "' row " + std::to_string(row + 1) + " is not a number");
  }
}

long CsvTable::integer(std::size_t row, const std::string& column) const {
  const std::string& s = cell(row, column);
  long v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw Error(ErrorKind::Schema,
                path_.string() + ": column '" + column + "' row " + std::to_string(row + 1) + " is not an integer");
  }
  return v;
}

}  // namespace gridsite::detail
