#pragma once

#include <string>
#include <vector>

#include "aiwdn/matrix.hpp"

namespace aiwdn {

// Wide CSV: one header row, one data row per matrix row. Doubles are written
// with %.17g so reads reproduce the exact values.
void write_csv(const std::string& path, const std::vector<std::string>& header, const Matrix& m);

struct CsvTable {
  std::vector<std::string> header;
  Matrix values;
};

CsvTable read_csv(const std::string& path);

// Header "n0,n1,..." for node-wide series.
std::vector<std::string> node_header(int n);

}  // namespace aiwdn
