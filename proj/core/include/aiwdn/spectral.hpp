#pragma once

#include "aiwdn/graph.hpp"
#include "aiwdn/matrix.hpp"

namespace aiwdn {

// The dense spectral operators shared by the convolution layers and the
// hydraulic tooling: adjacency A, degree D, Laplacian L = D - A, the
// symmetric normalized adjacency D^{-1/2} A D^{-1/2}, and the scaled
// Laplacian 2L/lambda_max - I.
struct SpectralOperators {
  Matrix adjacency;
  Matrix degree;
  Matrix laplacian;
  Matrix sym_adjacency;
  Matrix scaled_laplacian;
  double lambda_max = 0.0;
};

struct SpectralOptions {
  // Use the analytic bound lambda_max = 2 instead of power iteration.
  bool force_lambda_max_2 = false;
  double power_rel_tol = 1e-6;
  int power_max_iters = 200;
};

// Largest-magnitude eigenvalue of a symmetric matrix by power iteration with
// Rayleigh-quotient convergence; deterministic start vector.
double power_iteration_lambda_max(const Matrix& m, double rel_tol = 1e-6, int max_iters = 200);

SpectralOperators build_spectral(const Graph& g, const SpectralOptions& opts = {});

}  // namespace aiwdn
