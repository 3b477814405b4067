#pragma once

#include <vector>

#include "nbode/model.hpp"
#include "nbode/tape.hpp"
#include "nbode/types.hpp"

namespace nbode {

/// Mixture of rational quadratic kernels sum_q s_q^2 / (s_q^2 + |u - v|^2).
struct KernelConfig {
  std::vector<double> bandwidths{0.2, 0.5, 0.9, 1.3};
  void validate() const;
};

double rq_kernel(const Vec& u, const Vec& v, const KernelConfig& cfg);
double rq_kernel_sq(double dist2, const KernelConfig& cfg);

/// Squared MMD with within-sample sums over distinct pairs
/// (normalized by n(n-1)) and the full cross sum (normalized by n*m).
/// Can be negative. Throws ArgumentError if either sample has fewer than 2 rows.
double mmd2(const RowMat& x, const RowMat& y, const KernelConfig& cfg);
// V-statistic including the diagonal; always >= 0.
double mmd2_biased(const RowMat& x, const RowMat& y, const KernelConfig& cfg);

// Sum over consecutive K-row groups g of mmd2(data_g, model_g).
double mmd2_grouped_sum(const RowMat& model, const RowMat& data, int k, const KernelConfig& cfg);
ad::Tensor mmd2_grouped_sum(const ad::Tensor& model, const RowMat& data, int k, const KernelConfig& cfg);
ad::Var mmd2_grouped_sum(const ad::Var& model, const RowMat& data, int k, const KernelConfig& cfg);

/// Segments that start at `start` (B x d) and are compared with `targets[s-1]`
/// after s = 1..S data intervals.
struct SegmentBatch {
  RowMat start;
  std::vector<RowMat> targets;
  int size() const { return static_cast<int>(start.rows()); }
};

/// Centers with K neighbors each. Neighbor rows are center-major:
/// row c*K + k belongs to center c.
struct NeighborhoodBatch {
  SegmentBatch centers;
  RowMat offsets;                        // neighbor_0 - center_0, (B*K) x d
  std::vector<RowMat> neighbor_targets;  // S entries, (B*K) x d
  int k = 0;
};

struct RolloutSettings {
  double dt = 0.01;
  int n_sub = 2;
  int taylor_order = 2;
};

template <class T>
struct LossSums {
  T traj;  // sum over segments and steps of squared errors
  T nbhd;  // sum over centers and steps of mmd2 (unset when not computed)
  bool has_nbhd = false;
};

template <class T>
T to_value(ad::Tape* tape, const RowMat& v);

template <>
inline ad::Tensor to_value<ad::Tensor>(ad::Tape*, const RowMat& v) {
  return ad::Tensor(v);
}
template <>
inline ad::Var to_value<ad::Var>(ad::Tape* tape, const RowMat& v) {
  return tape->constant(v);
}

// Trajectory term only.
template <class T, class P>
T trajectory_loss_sum(const LayerParams<P>& p, const SegmentBatch& b, const RolloutSettings& r,
                      ad::Tape* tape = nullptr) {
  const auto steps = static_cast<int>(b.targets.size());
  const std::vector<T> traj = rollout_center(p, to_value<T>(tape, b.start), steps, r.dt, r.n_sub);
  T total = squared_error_sum(traj[0], b.targets[0]);
  for (int s = 1; s < steps; ++s) total = total + squared_error_sum(traj[static_cast<std::size_t>(s)], b.targets[static_cast<std::size_t>(s)]);
  return total;
}

// Trajectory term over the centers plus the neighborhood term.
template <class T, class P>
LossSums<T> neighborhood_loss_sums(const LayerParams<P>& p, const NeighborhoodBatch& b, const RolloutSettings& r,
                                   const KernelConfig& kernel, ad::Tape* tape = nullptr) {
  const auto steps = static_cast<int>(b.centers.targets.size());
  const auto roll = rollout_neighborhood(p, to_value<T>(tape, b.centers.start), to_value<T>(tape, b.offsets), steps,
                                         r.dt, r.n_sub, r.taylor_order);
  LossSums<T> out{squared_error_sum(roll.center[0], b.centers.targets[0]),
                  mmd2_grouped_sum(roll.neighbors[0], b.neighbor_targets[0], b.k, kernel), true};
  for (std::size_t s = 1; s < static_cast<std::size_t>(steps); ++s) {
    out.traj = out.traj + squared_error_sum(roll.center[s], b.centers.targets[s]);
    out.nbhd = out.nbhd + mmd2_grouped_sum(roll.neighbors[s], b.neighbor_targets[s], b.k, kernel);
  }
  return out;
}

/// Mean over segments and steps of the squared L2 rollout error.
double trajectory_loss(const MlpVectorField& m, const SegmentBatch& b, const RolloutSettings& r);
/// Mean over centers and steps of mmd2(data neighbors, reconstructed neighbors).
double neighborhood_loss(const MlpVectorField& m, const NeighborhoodBatch& b, const RolloutSettings& r,
                         const KernelConfig& kernel);

}  // namespace nbode
