#include "nbode/losses.hpp"

#include <numeric>
#include <string>

#include "nbode/errors.hpp"
#include "nbode/kdtree.hpp"
#include "nbode/parallel.hpp"

namespace nbode {

void KernelConfig::validate() const {
  if (bandwidths.empty()) throw ArgumentError("kernel needs at least one bandwidth");
  for (double s : bandwidths) {
    if (!(s > 0.0)) throw ArgumentError("kernel bandwidths must be positive");
  }
}

double rq_kernel_sq(double dist2, const KernelConfig& cfg) {
  double k = 0.0;
  for (double s : cfg.bandwidths) {
    const double s2 = s * s;
    k += s2 / (s2 + dist2);
  }
  return k;
}

double rq_kernel(const Vec& u, const Vec& v, const KernelConfig& cfg) {
  if (u.size() != v.size()) throw ArgumentError("kernel arguments differ in dimension");
  return rq_kernel_sq((u - v).squaredNorm(), cfg);
}

namespace {

// Sum of k(a_i, b_j) over all pairs, or over i < j when `upper` (a == b).
double kernel_sum(const RowMat& a, const RowMat& b, const KernelConfig& cfg, bool upper) {
  const auto rows = static_cast<std::size_t>(a.rows());
  const int d = static_cast<int>(a.cols());
  std::vector<double> partial(rows, 0.0);
  auto body = [&](std::size_t i) {
    double s = 0.0;
    const double* ai = a.data() + i * d;
    const Eigen::Index j0 = upper ? static_cast<Eigen::Index>(i) + 1 : 0;
    for (Eigen::Index j = j0; j < b.rows(); ++j) s += rq_kernel_sq(squared_distance(ai, b.data() + j * d, d), cfg);
    partial[i] = s;
  };
  if (rows * static_cast<std::size_t>(b.rows()) > 1000000) {
    parallel_for(rows, body);
  } else {
    for (std::size_t i = 0; i < rows; ++i) body(i);
  }
  return std::accumulate(partial.begin(), partial.end(), 0.0);
}

void check_samples(const RowMat& x, const RowMat& y) {
  if (x.rows() < 2 || y.rows() < 2) throw ArgumentError("mmd2 needs at least two samples on each side");
  if (x.cols() != y.cols()) throw ArgumentError("mmd2 samples differ in dimension");
}

// Value of mmd2 for one group and, optionally, its gradient with respect to y.
double group_mmd2(const double* x, const double* y, int k, int d, const KernelConfig& cfg, double* grad_y) {
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  const double norm_within = 1.0 / (static_cast<double>(k) * (k - 1));
  const double norm_cross = 1.0 / (static_cast<double>(k) * k);
  if (grad_y) std::fill(grad_y, grad_y + static_cast<std::ptrdiff_t>(k) * d, 0.0);
  auto slope = [&](double r2) {
    double g = 0.0;
    for (double s : cfg.bandwidths) {
      const double s2 = s * s;
      const double den = s2 + r2;
      g -= 2.0 * s2 / (den * den);
    }
    return g;
  };
  for (int i = 0; i < k; ++i) {
    for (int j = i + 1; j < k; ++j) {
      sxx += rq_kernel_sq(squared_distance(x + i * d, x + j * d, d), cfg);
      const double r2 = squared_distance(y + i * d, y + j * d, d);
      syy += rq_kernel_sq(r2, cfg);
      if (grad_y) {
        // Each unordered pair appears twice in the within-sample sum.
        const double c = 2.0 * norm_within * slope(r2);
        for (int e = 0; e < d; ++e) {
          const double diff = y[i * d + e] - y[j * d + e];
          grad_y[i * d + e] += c * diff;
          grad_y[j * d + e] -= c * diff;
        }
      }
    }
  }
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < k; ++j) {
      const double r2 = squared_distance(x + i * d, y + j * d, d);
      sxy += rq_kernel_sq(r2, cfg);
      if (grad_y) {
        const double c = -2.0 * norm_cross * slope(r2);
        for (int e = 0; e < d; ++e) grad_y[j * d + e] += c * (y[j * d + e] - x[i * d + e]);
      }
    }
  }
  return 2.0 * norm_within * (sxx + syy) - 2.0 * norm_cross * sxy;
}

void check_groups(const RowMat& model, const RowMat& data, int k) {
  if (k < 2) throw ArgumentError("mmd2 needs at least two samples per group");
  if (model.rows() != data.rows() || model.cols() != data.cols()) {
    throw ArgumentError("model and data neighbor blocks differ in shape");
  }
  if (model.rows() % k != 0) throw ArgumentError("neighbor rows are not a multiple of K");
}

}  // namespace

double mmd2(const RowMat& x, const RowMat& y, const KernelConfig& cfg) {
  check_samples(x, y);
  const double n = static_cast<double>(x.rows()), m = static_cast<double>(y.rows());
  const double sxx = 2.0 * kernel_sum(x, x, cfg, true);
  const double syy = 2.0 * kernel_sum(y, y, cfg, true);
  const double sxy = kernel_sum(x, y, cfg, false);
  return sxx / (n * (n - 1)) + syy / (m * (m - 1)) - 2.0 * sxy / (n * m);
}

double mmd2_biased(const RowMat& x, const RowMat& y, const KernelConfig& cfg) {
  if (x.rows() < 1 || y.rows() < 1 || x.cols() != y.cols()) throw ArgumentError("invalid mmd2 samples");
  const double n = static_cast<double>(x.rows()), m = static_cast<double>(y.rows());
  const double c = rq_kernel_sq(0.0, cfg);
  const double sxx = 2.0 * kernel_sum(x, x, cfg, true) + n * c;
  const double syy = 2.0 * kernel_sum(y, y, cfg, true) + m * c;
  const double sxy = kernel_sum(x, y, cfg, false);
  return sxx / (n * n) + syy / (m * m) - 2.0 * sxy / (n * m);
}

double mmd2_grouped_sum(const RowMat& model, const RowMat& data, int k, const KernelConfig& cfg) {
  check_groups(model, data, k);
  const int d = static_cast<int>(model.cols());
  double total = 0.0;
  for (Eigen::Index g = 0; g < model.rows() / k; ++g) {
    total += group_mmd2(data.data() + g * k * d, model.data() + g * k * d, k, d, cfg, nullptr);
  }
  return total;
}

ad::Tensor mmd2_grouped_sum(const ad::Tensor& model, const RowMat& data, int k, const KernelConfig& cfg) {
  return ad::Tensor::scalar(mmd2_grouped_sum(model.value(), data, k, cfg));
}

ad::Var mmd2_grouped_sum(const ad::Var& model, const RowMat& data, int k, const KernelConfig& cfg) {
  const RowMat& y = model.value();
  check_groups(y, data, k);
  const int d = static_cast<int>(y.cols());
  RowMat grad(y.rows(), y.cols());
  double total = 0.0;
  for (Eigen::Index g = 0; g < y.rows() / k; ++g) {
    total += group_mmd2(data.data() + g * k * d, y.data() + g * k * d, k, d, cfg, grad.data() + g * k * d);
  }
  const int id = model.id();
  const int parents[] = {id};
  return model.tape().record(RowMat::Constant(1, 1, total), parents,
                             [id, grad = std::move(grad)](ad::Tape& tape, const RowMat&, const RowMat& adj) {
                               tape.accumulate(id, adj(0, 0) * grad);
                             });
}

double trajectory_loss(const MlpVectorField& m, const SegmentBatch& b, const RolloutSettings& r) {
  if (b.targets.empty() || b.size() == 0) throw ArgumentError("empty segment batch");
  const ad::Tensor total = trajectory_loss_sum<ad::Tensor>(tensor_params(m), b, r);
  return total.value()(0, 0) / (static_cast<double>(b.size()) * static_cast<double>(b.targets.size()));
}

double neighborhood_loss(const MlpVectorField& m, const NeighborhoodBatch& b, const RolloutSettings& r,
                         const KernelConfig& kernel) {
  if (b.centers.targets.empty() || b.centers.size() == 0) throw BatchError("empty neighborhood batch");
  const auto sums = neighborhood_loss_sums<ad::Tensor>(tensor_params(m), b, r, kernel);
  return sums.nbhd.value()(0, 0) /
         (static_cast<double>(b.centers.size()) * static_cast<double>(b.centers.targets.size()));
}

}  // namespace nbode
