#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nbode/cover.hpp"
#include "nbode/dataset.hpp"
#include "nbode/integrate.hpp"
#include "nbode/losses.hpp"
#include "nbode/model.hpp"
#include "nbode/sinkhorn.hpp"
#include "nbode/train.hpp"

namespace nbode {

/// A vector field in normalized coordinates, either a trained model or the
/// transformed ground truth. field_batch maps rows to rows.
struct Surrogate {
  int dim = 0;
  std::function<void(const RowMat& u, RowMat& du)> field_batch;
  std::function<Mat(const Vec& u)> jacobian;
};

Surrogate model_surrogate(const MlpVectorField& m);
Surrogate truth_surrogate(const SystemSpec& spec, const AffineTransform& t);

struct EvalConfig {
  double vpt_threshold = 0.3;
  std::optional<double> lambda1;  // largest ground-truth exponent; estimated when absent
  int attractor_samples = 5000;
  double lyapunov_times = 100.0;  // long-horizon length in units of 1/lambda1
  int mmd_grid = 101;             // saved times, uniform over [0, lyapunov_times]
  double plateau_from = 90.0;     // plateau = mean curve value for Lyapunov times >= this
  KernelConfig kernel;
  SinkhornOptions sinkhorn;
  int sinkhorn_pieces = 10;  // segments per validation trajectory
  int n_sub = 2;             // RK4 substeps per data interval for model rollouts
  int lyapunov_ics = 50;     // test initial conditions for the spectrum comparison; 0 skips it
  double lyapunov_horizon = 1000.0;
  double reorth_dt = 1.0;
  int lambda1_ics = 4;
  std::uint64_t seed = 0;
  StepControl ctrl = StepControl::data_generation();

  void validate() const;
};

// Rolls every row of u0 forward with fixed-step RK4 (n_sub substeps per dt),
// calling on_step(s, state) after each of the `steps` intervals. Rows that
// become non-finite stay non-finite; rows are independent.
void rollout_batch(const Surrogate& f, const RowMat& u0, double dt, int steps, int n_sub,
                   const std::function<void(int, const RowMat&)>& on_step);

struct VptResult {
  std::vector<double> mean_nrmse;         // mean over trajectories at t_j = (j+1) dt
  std::vector<std::vector<double>> nrmse;  // per trajectory; +inf after divergence
  std::vector<double> vpt;                // per trajectory, in Lyapunov times
  double vpt_mean = 0.0;
  int diverged = 0;
};

// Last compliant time (k+1)*dt before curve first exceeds eps, times lambda1;
// the full length when it never does.
double vpt_from_curve(std::span<const double> curve, double dt, double lambda1, double eps);

// clean_trajectories is an (n*m) x d clean test block; each trajectory is
// predicted from its first state over the remaining m-1 intervals.
VptResult nrmse_vpt(const Surrogate& model, const RowMat& clean_trajectories, int n, int m, double dt,
                    double lambda1, double eps, int n_sub);

// Mean ground-truth largest Lyapunov exponent over a few on-attractor starts.
double estimate_lambda1(const SystemSpec& spec, const EvalConfig& cfg);

// Paired U-statistic: mean over k != k' of
// k(x_k, x_k') + k(y_k, y_k') - k(x_k, y_k') - k(x_k', y_k). Exactly 0 when x == y.
double mmd2_paired(const RowMat& x, const RowMat& y, const KernelConfig& cfg);

struct MmdCurve {
  std::vector<double> lyapunov_time;
  std::vector<double> mmd2;           // truncated at model divergence
  std::vector<double> baseline_curve;  // two independent ground-truth samples
  double baseline = 0.0;              // time average of baseline_curve
  double plateau = 0.0;               // +inf when the model diverged
  bool diverged = false;
  RowMat truth_final;  // samples at the last time, normalized coordinates
  RowMat model_final;
};

// Ground-truth samples evolved over the grid, as normalized rows per saved time.
std::vector<RowMat> evolve_truth_samples(const SystemSpec& spec, const AffineTransform& t, const RowMat& initial,
                                         std::span<const double> times, const StepControl& ctrl);

MmdCurve attractor_mmd_curve(const Surrogate& model, const SystemSpec& spec, const AffineTransform& t, double dt,
                             double lambda1, const EvalConfig& cfg);

struct RelativeErrors {
  std::vector<double> vf;   // per used point
  std::vector<double> jac;
  std::vector<std::size_t> points;  // row index of each used point
  std::size_t skipped = 0;          // points where the reference field vanishes
};

RelativeErrors relative_errors(const Surrogate& model, const Surrogate& truth, const RowMat& points);

struct LyapunovComparison {
  Vec model_mean;
  Vec truth_mean;
  double mae = 0.0;
};

Vec mean_lyapunov_spectrum(const Surrogate& f, const RowMat& initial, double horizon, double reorth_dt,
                           const StepControl& ctrl);
LyapunovComparison lyapunov_mae(const Surrogate& model, const Surrogate& truth, const RowMat& initial,
                                double horizon, double reorth_dt, const StepControl& ctrl);

struct SinkhornScore {
  double value = 0.0;
  bool converged = true;
  int segments = 0;
};

// Cuts each clean validation trajectory into `pieces` segments, rolls each
// segment start forward to the segment's last sample and compares model and
// data endpoints with the Sinkhorn divergence.
SinkhornScore sinkhorn_score(const Surrogate& model, const TrajectoryDataset& val, int pieces, int n_sub,
                             const SinkhornOptions& opts);

struct SweepCell {
  int k = 0;
  double lambda = 0.0;
  bool failed = false;
  std::string error;
  SinkhornScore score;
  std::optional<MlpVectorField> model;  // best checkpoint of the cell's run
};

struct SweepResult {
  std::vector<SweepCell> cells;  // K-major order
  int selected = -1;             // index into cells, -1 when every cell failed
};

// Lowest score wins; ties go to the smaller lambda, then the smaller K.
int select_sweep_cell(const std::vector<SweepCell>& cells);

SweepResult hyperparam_sweep(const TrajectoryDataset& train_data, const TrajectoryDataset& val_data,
                             const NeighborCover& cover, const TrainConfig& base, const std::vector<int>& ks,
                             const std::vector<double>& lambdas, const EvalConfig& eval,
                             const std::function<void(const SweepCell&)>& progress = {});

std::string format_sweep_csv(const SweepResult& r);

struct EvalReport {
  double lambda1 = 0.0;
  VptResult vpt;
  std::optional<MmdCurve> mmd;
  RelativeErrors rel;
  std::optional<LyapunovComparison> lyapunov;
  std::optional<SinkhornScore> sinkhorn;
};

double median(std::vector<double> v);

}  // namespace nbode
