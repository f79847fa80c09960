#include "aiwdn/csv.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace aiwdn {

void write_csv(const std::string& path, const std::vector<std::string>& header, const Matrix& m) {
  if (static_cast<int>(header.size()) != m.cols())
    throw std::invalid_argument("write_csv: header width != column count");
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_csv: cannot open " + path);
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (j) out << ",";
    out << header[j];
  }
  out << "\n";
  for (int i = 0; i < m.rows(); ++i) {
    for (int j = 0; j < m.cols(); ++j) {
      if (j) out << ",";
      out << format_double(m(i, j));
    }
    out << "\n";
  }
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_csv: cannot open " + path);
  CsvTable table;
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("read_csv: empty file " + path);
  {
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) table.header.push_back(cell);
  }
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string cell;
    std::vector<double> row;
    while (std::getline(ls, cell, ',')) row.push_back(std::stod(cell));
    if (row.size() != table.header.size())
      throw std::runtime_error("read_csv: ragged row in " + path);
    rows.push_back(std::move(row));
  }
  table.values = Matrix(static_cast<int>(rows.size()), static_cast<int>(table.header.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      table.values(static_cast<int>(i), static_cast<int>(j)) = rows[i][j];
  return table;
}

std::vector<std::string> node_header(int n) {
  std::vector<std::string> h;
  h.reserve(n);
  for (int i = 0; i < n; ++i) h.push_back("n" + std::to_string(i));
  return h;
}

}  // namespace aiwdn
