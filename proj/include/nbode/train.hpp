#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "nbode/cover.hpp"
#include "nbode/dataset.hpp"
#include "nbode/losses.hpp"
#include "nbode/model.hpp"
#include "nbode/optimizer.hpp"

namespace nbode {

enum class Method { Vanilla, Neighborhood };

std::string method_name(Method m);
Method method_from_name(const std::string& name);

struct TrainConfig {
  Method method = Method::Neighborhood;
  int horizon = 10;  // rollout steps S
  int batch_size = 2048;
  int k = 16;
  double lambda = 1.0;
  double lr = 2e-3;
  long steps = 5000;
  int val_every = 100;
  std::uint64_t seed = 0;
  int n_sub = 2;
  int taylor_order = 2;
  KernelConfig kernel;
  std::vector<int> hidden{64, 64};
  AdaBeliefConfig optimizer;
  int chunk_centers = 16;    // centers per gradient chunk with neighbors
  int chunk_segments = 256;  // segments per gradient chunk without neighbors
  int max_consecutive_skips = 50;
  bool log_wallclock = false;

  void validate() const;
  // The neighborhood term vanishes for the vanilla method and for lambda = 0;
  // the whole batch then consists of trajectory segments.
  bool uses_neighbors() const { return method == Method::Neighborhood && lambda > 0.0; }
  int effective_k() const { return uses_neighbors() ? k : 0; }
  int centers_per_batch() const { return batch_size / (effective_k() + 1); }
};

/// Draws training batches from the noisy train states.
class BatchSampler {
 public:
  // `cover` may be null when only trajectory segments are needed.
  BatchSampler(const TrajectoryDataset& data, const NeighborCover* cover, int horizon, int k, std::uint64_t seed);

  // `count` distinct segment starts, uniform over all (i, j) with j <= m-1-S.
  SegmentBatch sample_segments(int count);
  // `count` distinct centers, uniform over cover centers with at least K
  // neighbors, each with K neighbors drawn without replacement.
  NeighborhoodBatch sample_neighborhoods(int count);

  std::size_t eligible_segments() const { return segment_pool_.size(); }
  std::size_t eligible_centers() const { return center_pool_.size(); }

 private:
  SegmentBatch segments_from(std::span<const std::uint32_t> starts) const;

  const TrajectoryDataset& data_;
  const NeighborCover* cover_;
  int horizon_;
  int k_;
  std::mt19937_64 rng_;
  std::vector<std::uint32_t> segment_pool_;  // flat indices
  std::vector<std::uint32_t> center_pool_;   // positions in the cover
  std::vector<std::uint32_t> scratch_;
};

// Non-overlapping segments of length S covering each trajectory from j = 0.
SegmentBatch validation_segments(const TrajectoryDataset& ds, int horizon);
// Mean squared rollout error; returns +inf if a rollout diverges.
double validation_loss(const MlpVectorField& m, const SegmentBatch& segments, const RolloutSettings& r,
                       int chunk = 512);

SegmentBatch slice(const SegmentBatch& b, int begin, int end);
NeighborhoodBatch slice(const NeighborhoodBatch& b, int begin, int end);

struct TrainLogRow {
  long step = 0;
  bool has_train = false;
  bool skipped = false;
  double train_loss = 0.0;
  double traj_loss = 0.0;
  bool has_nbhd = false;
  double nbhd_loss = 0.0;
  bool has_val = false;
  double val_loss = 0.0;
  double wallclock_ms = -1.0;  // negative when not recorded
};

struct TrainResult {
  MlpVectorField best;
  CheckpointInfo best_info;
  MlpVectorField last;
  std::vector<TrainLogRow> log;
  long skipped_steps = 0;
};

struct StepLoss {
  double total = 0.0;
  double traj = 0.0;
  double nbhd = 0.0;
  std::vector<double> grad;
};

// Loss and parameter gradient of one batch, reduced over chunks in a fixed order.
StepLoss segment_step_loss(const MlpVectorField& m, const SegmentBatch& b, const RolloutSettings& r, int chunk);
StepLoss neighborhood_step_loss(const MlpVectorField& m, const NeighborhoodBatch& b, const RolloutSettings& r,
                                const KernelConfig& kernel, double lambda, int chunk);

/// Minibatch training with AdaBelief. Validation (trajectory loss on the
/// validation split) runs at step 0, every val_every steps and at the end;
/// the parameters with the lowest validation loss are returned as `best`.
/// Steps with a non-finite loss or diverging rollout are skipped; more than
/// max_consecutive_skips in a row throws TrainingAbort.
TrainResult train(const TrajectoryDataset& train_data, const TrajectoryDataset& val_data, const NeighborCover* cover,
                  const TrainConfig& cfg, const std::function<void(const TrainLogRow&)>& progress = {});

// CSV with columns step,train_loss,traj_loss,nbhd_loss,val_loss,wallclock_ms; empty cells for absent values.
std::string format_train_log(const std::vector<TrainLogRow>& log, const TrainConfig& cfg);

// Shortest round-trip decimal representation.
std::string format_double(double v);

}  // namespace nbode
