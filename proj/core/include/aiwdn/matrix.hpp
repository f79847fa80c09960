#pragma once

#include <string>
#include <vector>

namespace aiwdn {

// Dense row-major matrix. All graphs in this toolkit are small (<= ~1000
// nodes), so a flat double buffer is the representation everywhere.
class Matrix {
 public:
  Matrix() = default;
  Matrix(int rows, int cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows) * cols, fill) {}

  static Matrix identity(int n);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(int i, int j) { return data_[static_cast<std::size_t>(i) * cols_ + j]; }
  double operator()(int i, int j) const { return data_[static_cast<std::size_t>(i) * cols_ + j]; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool same_shape(const Matrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  bool operator==(const Matrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_ && data_ == other.data_;
  }

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> data_;
};

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);
Matrix add(const Matrix& a, const Matrix& b);
Matrix subtract(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& a, double s);

double max_abs(const Matrix& a);
double max_abs_diff(const Matrix& a, const Matrix& b);

// Solves a x = b by LU with partial pivoting. Throws std::runtime_error on a
// numerically singular pivot.
std::vector<double> lu_solve(Matrix a, std::vector<double> b);

// Shortest-round-trip-safe formatting ("%.17g"); parsing the result yields
// the identical double.
std::string format_double(double v);

}  // namespace aiwdn
