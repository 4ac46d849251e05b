#pragma once

#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

namespace gridsite::detail {

/// Minimal reader for unquoted, comma-separated files with a header row.
class CsvTable {
 public:
  static CsvTable read(const std::filesystem::path& path);

  std::size_t rows() const { return cells_.size(); }
  bool has_column(const std::string& name) const { return index_.count(name) != 0; }
  const std::string& cell(std::size_t row, const std::string& column) const;
  double number(std::size_t row, const std::string& column) const;
  long integer(std::size_t row, const std::string& column) const;

 private:
  std::filesystem::path path_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<std::vector<std::string>> cells_;
};

std::string trim(std::string s);

}  // namespace gridsite::detail
