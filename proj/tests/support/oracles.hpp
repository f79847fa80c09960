#pragma once

// Test-only numeric oracles, independent of the library implementation paths
// they check.

#include <cmath>
#include <stdexcept>
#include <vector>

#include "aiwdn/matrix.hpp"

namespace aiwdn::testing {

// Cyclic Jacobi eigendecomposition of a symmetric matrix: a = V diag(w) V^T.
struct SymmetricEigen {
  std::vector<double> values;
  Matrix vectors;  // columns are eigenvectors
};

inline SymmetricEigen symmetric_eigen(Matrix a) {
  const int n = a.rows();
  if (a.cols() != n) throw std::invalid_argument("symmetric_eigen: square input required");
  Matrix v = Matrix::identity(n);
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) off += a(i, j) * a(i, j);
    if (off < 1e-24) break;
    for (int p = 0; p < n; ++p) {
      for (int q = p + 1; q < n; ++q) {
        if (std::fabs(a(p, q)) < 1e-18) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (int k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (int k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  SymmetricEigen out;
  out.values.resize(n);
  for (int i = 0; i < n; ++i) out.values[i] = a(i, i);
  out.vectors = std::move(v);
  return out;
}

inline std::vector<double> symmetric_eigenvalues(const Matrix& a) {
  return symmetric_eigen(a).values;
}

// Chebyshev polynomial of the first kind at a scalar, via the trigonometric
// and hyperbolic closed forms.
inline double chebyshev_scalar(int k, double x) {
  if (x >= 1.0) return std::cosh(k * std::acosh(x));
  if (x <= -1.0) {
    const double v = std::cosh(k * std::acosh(-x));
    return (k % 2 == 0) ? v : -v;
  }
  return std::cos(k * std::acos(x));
}

}  // namespace aiwdn::testing
