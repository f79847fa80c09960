#include "aiwdn/spectral.hpp"

#include <cmath>
#include <cstdint>
#include <stdexcept>

namespace aiwdn {

double power_iteration_lambda_max(const Matrix& m, double rel_tol, int max_iters) {
  const int n = m.rows();
  if (n == 0) return 0.0;
  // Deterministic pseudo-random start: avoids alignment with the all-ones
  // null vector of a graph Laplacian.
  std::vector<double> v(n);
  std::uint64_t bits = 0x243f6a8885a308d3ULL;
  for (int i = 0; i < n; ++i) {
    bits = bits * 6364136223846793005ULL + 1442695040888963407ULL;
    v[i] = static_cast<double>(static_cast<std::int64_t>(bits >> 11)) / 9.0e18 + 1e-3 * (i + 1);
  }
  double norm = 0.0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  for (double& x : v) x /= norm;

  // The Rayleigh quotient of a symmetric PSD matrix only ever underestimates
  // the top eigenvalue, so iterate to stagnation well past rel_tol; the
  // scaled-Laplacian spectrum must stay inside [-1, 1] to ~1e-8.
  const double stop = std::min(rel_tol, 1e-13);
  double lambda = 0.0;
  for (int iter = 0; iter < max_iters; ++iter) {
    std::vector<double> w(n, 0.0);
    for (int i = 0; i < n; ++i) {
      double s = 0.0;
      for (int j = 0; j < n; ++j) s += m(i, j) * v[j];
      w[i] = s;
    }
    double rq = 0.0, wn = 0.0;
    for (int i = 0; i < n; ++i) {
      rq += v[i] * w[i];
      wn += w[i] * w[i];
    }
    wn = std::sqrt(wn);
    if (wn < 1e-300) return 0.0;  // matrix annihilates the iterate
    for (int i = 0; i < n; ++i) v[i] = w[i] / wn;
    if (iter > 0 && std::fabs(rq - lambda) <= stop * std::max(1.0, std::fabs(rq))) {
      lambda = rq;
      break;
    }
    lambda = rq;
  }
  return std::fabs(lambda);
}

SpectralOperators build_spectral(const Graph& g, const SpectralOptions& opts) {
  validate_graph(g);
  if (g.n_nodes == 0) throw std::invalid_argument("build_spectral: empty graph");
  const int n = g.n_nodes;

  SpectralOperators ops;
  ops.adjacency = Matrix(n, n);
  for (int i = 0; i < g.num_edges(); ++i) {
    const auto [u, v] = g.edges[i];
    const double w = g.weight(i);
    ops.adjacency(u, v) += w;
    if (!g.directed) ops.adjacency(v, u) += w;
  }

  ops.degree = Matrix(n, n);
  for (int i = 0; i < n; ++i) {
    double d = 0.0;
    for (int j = 0; j < n; ++j) d += ops.adjacency(i, j);
    ops.degree(i, i) = d;
  }

  ops.laplacian = subtract(ops.degree, ops.adjacency);

  // Pseudo-inverse convention: degree-0 nodes get a zero row/column in A_sym.
  std::vector<double> dinv_sqrt(n, 0.0);
  for (int i = 0; i < n; ++i) {
    const double d = ops.degree(i, i);
    dinv_sqrt[i] = d > 0.0 ? 1.0 / std::sqrt(d) : 0.0;
  }
  ops.sym_adjacency = Matrix(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      ops.sym_adjacency(i, j) = dinv_sqrt[i] * ops.adjacency(i, j) * dinv_sqrt[j];

  if (opts.force_lambda_max_2) {
    ops.lambda_max = 2.0;
  } else {
    ops.lambda_max = power_iteration_lambda_max(ops.laplacian, opts.power_rel_tol,
                                                opts.power_max_iters);
    if (ops.lambda_max < 1e-12) ops.lambda_max = 2.0;  // edgeless graph: L = 0
  }

  ops.scaled_laplacian = scale(ops.laplacian, 2.0 / ops.lambda_max);
  for (int i = 0; i < n; ++i) ops.scaled_laplacian(i, i) -= 1.0;
  return ops;
}

}  // namespace aiwdn
