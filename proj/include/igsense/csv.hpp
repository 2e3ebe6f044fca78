#pragma once

// CSV emission with a fixed contract: one header row, fixed column order,
// 17-significant-digit decimal serialization. Reruns with equal inputs are
// byte-identical.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "igsense/core.hpp"

namespace igsense {

inline std::string format_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return std::string(buf);
}

class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& columns)
      : out_(path, std::ios::binary), n_columns_(columns.size()) {
    if (!out_) throw ConfigError("cannot open output file " + path.string());
    for (std::size_t i = 0; i < columns.size(); ++i) {
      if (i) out_ << ',';
      out_ << columns[i];
    }
    out_ << '\n';
  }

  void row(const std::vector<double>& values) {
    if (values.size() != n_columns_)
      throw DimensionMismatch("csv row has " + std::to_string(values.size()) + " cells, header has " +
                              std::to_string(n_columns_));
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (i) out_ << ',';
      out_ << format_g17(values[i]);
    }
    out_ << '\n';
  }

  // mixed text/number rows (first cells textual, e.g. parameter names)
  void row(const std::vector<std::string>& labels, const std::vector<double>& values) {
    if (labels.size() + values.size() != n_columns_)
      throw DimensionMismatch("csv row does not match the header width");
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (i) out_ << ',';
      out_ << labels[i];
    }
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (i + labels.size()) out_ << ',';
      out_ << format_g17(values[i]);
    }
    out_ << '\n';
  }

 private:
  std::ofstream out_;
  std::size_t n_columns_;
};

}  // namespace igsense
