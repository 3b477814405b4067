#pragma once

#include "nbode/types.hpp"

namespace nbode {

struct SinkhornOptions {
  // Entropic regularization as a fraction of the mean squared distance between the two clouds.
  double epsilon_scale = 0.05;
  // Absolute regularization; overrides epsilon_scale when positive.
  double epsilon = 0.0;
  int max_iter = 2000;
  double tol = 1e-6;  // L1 marginal violation
};

struct SinkhornResult {
  double value = 0.0;
  double epsilon = 0.0;
  int iterations = 0;
  bool converged = true;
};

RowMat squared_distances(const RowMat& x, const RowMat& y);

// Entropic OT cost between uniform measures on the rows of x and y, as the dual
// objective <a, f> + <b, g> at the fixed point of log-domain Sinkhorn iterations.
SinkhornResult entropic_ot(const RowMat& x, const RowMat& y, double epsilon, int max_iter, double tol);

// OT between x and itself via the averaged symmetric update f <- (f + T(f)) / 2,
// which converges much faster than alternating updates on this problem.
SinkhornResult entropic_ot_self(const RowMat& x, double epsilon, int max_iter, double tol);

// Debiased divergence OT(x, y) - OT(x, x)/2 - OT(y, y)/2 with one shared epsilon.
SinkhornResult sinkhorn_divergence(const RowMat& x, const RowMat& y, const SinkhornOptions& opts = {});

}  // namespace nbode
