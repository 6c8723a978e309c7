#include "flatdiv/csv.hpp"

#include <charconv>
#include <cmath>
#include <stdexcept>

namespace flatdiv {

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw std::runtime_error("format_double failed");
  return std::string(buf, ptr);
}

CsvWriter::CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header)
    : path_(path), os_(path), columns_(header.size()) {
  if (!os_) throw std::runtime_error("cannot open CSV for writing: " + path.string());
  write_row(header);
  rows_ = 0;  // header does not count
}

void CsvWriter::write_row(const std::vector<std::string>& cells) {
  if (cells.size() != columns_)
    throw std::runtime_error("CSV row width mismatch in " + path_.string());
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (cells[i].find_first_of(",\"\n") != std::string::npos)
      throw std::runtime_error("CSV cell needs quoting (unsupported): " + cells[i]);
    if (i) os_ << ',';
    os_ << cells[i];
  }
  os_ << '\n';
  ++rows_;
}

}  // namespace flatdiv
