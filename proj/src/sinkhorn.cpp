#include "nbode/sinkhorn.hpp"

#include <cmath>

#include "nbode/errors.hpp"

namespace nbode {

namespace {

// out_i = -eps * log sum_j exp(h_j - c_ij / eps), with h_j = log w_j + pot_j / eps.
void soft_min(const RowMat& c, const Eigen::ArrayXd& pot, double log_w, double eps, Eigen::ArrayXd& out) {
  const double inv = 1.0 / eps;
  const Eigen::ArrayXd h = log_w + pot * inv;
  Eigen::ArrayXd t(c.cols());
  for (Eigen::Index i = 0; i < c.rows(); ++i) {
    t = h - c.row(i).transpose().array() * inv;
    const double mx = t.maxCoeff();
    out(i) = -eps * (mx + std::log((t - mx).exp().sum()));
  }
}

}  // namespace

RowMat squared_distances(const RowMat& x, const RowMat& y) {
  if (x.cols() != y.cols()) throw ArgumentError("point clouds differ in dimension");
  RowMat c(x.rows(), y.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < y.rows(); ++j) c(i, j) = (x.row(i) - y.row(j)).squaredNorm();
  }
  return c;
}

SinkhornResult entropic_ot(const RowMat& x, const RowMat& y, double epsilon, int max_iter, double tol) {
  if (x.rows() == 0 || y.rows() == 0) throw ArgumentError("entropic_ot needs non-empty point clouds");
  if (!(epsilon > 0.0)) throw ArgumentError("entropic_ot needs epsilon > 0");
  if (max_iter < 1) throw ArgumentError("max_iter must be positive");
  const RowMat cxy = squared_distances(x, y);
  const RowMat cyx = cxy.transpose();
  const double log_a = -std::log(static_cast<double>(x.rows()));
  const double log_b = -std::log(static_cast<double>(y.rows()));

  Eigen::ArrayXd f = Eigen::ArrayXd::Zero(x.rows()), g = Eigen::ArrayXd::Zero(y.rows());
  Eigen::ArrayXd f_new(x.rows());
  SinkhornResult res;
  res.epsilon = epsilon;
  res.converged = false;
  for (int it = 1; it <= max_iter; ++it) {
    soft_min(cxy, g, log_b, epsilon, f_new);
    // Row marginal of the plan from (f, g) relative to a, in L1.
    const double err = it == 1 ? INFINITY : (((f - f_new) / epsilon).exp() - 1.0).abs().sum() / x.rows();
    f.swap(f_new);
    soft_min(cyx, f, log_a, epsilon, g);
    res.iterations = it;
    if (err < tol) {
      res.converged = true;
      break;
    }
  }
  res.value = f.mean() + g.mean();
  return res;
}

SinkhornResult entropic_ot_self(const RowMat& x, double epsilon, int max_iter, double tol) {
  if (x.rows() == 0) throw ArgumentError("entropic_ot_self needs a non-empty point cloud");
  if (!(epsilon > 0.0)) throw ArgumentError("entropic_ot_self needs epsilon > 0");
  if (max_iter < 1) throw ArgumentError("max_iter must be positive");
  const RowMat c = squared_distances(x, x);
  const double log_a = -std::log(static_cast<double>(x.rows()));

  Eigen::ArrayXd f = Eigen::ArrayXd::Zero(x.rows());
  Eigen::ArrayXd t(x.rows());
  SinkhornResult res;
  res.epsilon = epsilon;
  res.converged = false;
  for (int it = 1; it <= max_iter; ++it) {
    soft_min(c, f, log_a, epsilon, t);
    const double err = (((f - t) / epsilon).exp() - 1.0).abs().sum() / x.rows();
    f = 0.5 * (f + t);
    res.iterations = it;
    if (err < tol) {
      res.converged = true;
      break;
    }
  }
  res.value = 2.0 * f.mean();
  return res;
}

SinkhornResult sinkhorn_divergence(const RowMat& x, const RowMat& y, const SinkhornOptions& opts) {
  if (x.rows() == 0 || y.rows() == 0) throw ArgumentError("sinkhorn_divergence needs non-empty point clouds");
  double eps = opts.epsilon;
  if (!(eps > 0.0)) {
    if (!(opts.epsilon_scale > 0.0)) throw ArgumentError("epsilon_scale must be positive");
    const double mean_cost = squared_distances(x, y).mean();
    if (!std::isfinite(mean_cost)) throw NumericalError("non-finite points in sinkhorn_divergence");
    // All points coincide.
    if (mean_cost == 0.0) return SinkhornResult{};
    eps = opts.epsilon_scale * mean_cost;
  }
  const SinkhornResult xy = entropic_ot(x, y, eps, opts.max_iter, opts.tol);
  const SinkhornResult xx = entropic_ot_self(x, eps, opts.max_iter, opts.tol);
  const SinkhornResult yy = entropic_ot_self(y, eps, opts.max_iter, opts.tol);
  SinkhornResult res;
  res.value = xy.value - 0.5 * xx.value - 0.5 * yy.value;
  res.epsilon = eps;
  res.iterations = xy.iterations + xx.iterations + yy.iterations;
  res.converged = xy.converged && xx.converged && yy.converged;
  return res;
}

}  // namespace nbode
