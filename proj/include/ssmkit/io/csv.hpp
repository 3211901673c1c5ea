#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "ssmkit/common.hpp"

namespace ssmkit::io {

/// Deterministic CSV writer: shortest round-trip formatting for doubles,
/// no timestamps, rows written in insertion order.
class CsvWriter {
public:
  explicit CsvWriter(std::vector<std::string> header) : header_(std::move(header)) {}

  CsvWriter& cell(const std::string& s) {
    row_.push_back(s);
    return *this;
  }
  CsvWriter& cell(double v) { return cell(fmt_double(v)); }
  CsvWriter& cell(long v) { return cell(std::to_string(v)); }
  CsvWriter& cell(int v) { return cell(std::to_string(v)); }

  void end_row() {
    if (row_.size() != header_.size())
      throw IoError("csv row has " + std::to_string(row_.size()) + " cells, expected " +
                    std::to_string(header_.size()));
    rows_.push_back(row_);
    row_.clear();
  }

  void write(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write csv: " + path.string());
    out << join(header_) << "\n";
    for (const auto& row : rows_) out << join(row) << "\n";
    if (!out) throw IoError("write failed: " + path.string());
  }

private:
  static std::string join(const std::vector<std::string>& cells) {
    std::string line;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) line += ",";
      line += cells[i];
    }
    return line;
  }

  std::vector<std::string> header_;
  std::vector<std::string> row_;
  std::vector<std::vector<std::string>> rows_;
};

}  // namespace ssmkit::io
