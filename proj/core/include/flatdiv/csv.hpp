#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace flatdiv {

/// Shortest round-trip decimal representation, locale-independent.
std::string format_double(double v);

class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header);

  void write_row(const std::vector<std::string>& cells);
  int rows() const { return rows_; }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  std::ofstream os_;
  std::size_t columns_;
  int rows_ = 0;
};

}  // namespace flatdiv
