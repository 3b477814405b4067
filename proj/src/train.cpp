#include "nbode/train.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <limits>

#include "nbode/errors.hpp"
#include "nbode/parallel.hpp"

namespace nbode {

std::string method_name(Method m) { return m == Method::Vanilla ? "vanilla" : "neighborhood"; }

Method method_from_name(const std::string& name) {
  if (name == "vanilla") return Method::Vanilla;
  if (name == "neighborhood") return Method::Neighborhood;
  throw ArgumentError("unknown method '" + name + "' (expected vanilla or neighborhood)");
}

void TrainConfig::validate() const {
  if (horizon < 1) throw ArgumentError("horizon S must be >= 1");
  if (batch_size < 1) throw ArgumentError("batch_size must be >= 1");
  if (!(lambda >= 0.0)) throw ArgumentError("lambda must be >= 0");
  if (!(lr > 0.0)) throw ArgumentError("learning rate must be positive");
  if (steps < 0) throw ArgumentError("steps must be >= 0");
  if (val_every < 1) throw ArgumentError("val_every must be >= 1");
  if (n_sub < 1) throw ArgumentError("n_sub must be >= 1");
  if (taylor_order != 1 && taylor_order != 2) throw ArgumentError("taylor_order must be 1 or 2");
  if (chunk_centers < 1 || chunk_segments < 1) throw ArgumentError("chunk sizes must be >= 1");
  if (max_consecutive_skips < 0) throw ArgumentError("max_consecutive_skips must be >= 0");
  for (int h : hidden) {
    if (h < 1) throw ArgumentError("hidden layer sizes must be positive");
  }
  kernel.validate();
  if (uses_neighbors()) {
    if (k < 2) throw ArgumentError("K must be >= 2 for the neighborhood loss");
    if (centers_per_batch() < 1) throw ArgumentError("batch_size too small: B' = floor(|B| / (K + 1)) must be >= 1");
  }
}

BatchSampler::BatchSampler(const TrajectoryDataset& data, const NeighborCover* cover, int horizon, int k,
                           std::uint64_t seed)
    : data_(data), cover_(cover), horizon_(horizon), k_(k), rng_(seed) {
  if (horizon < 1) throw ArgumentError("horizon must be >= 1");
  for (int i = 0; i < data.n; ++i) {
    for (int j = 0; j + horizon <= data.m - 1; ++j) segment_pool_.push_back(static_cast<std::uint32_t>(i * data.m + j));
  }
  if (segment_pool_.empty()) throw BatchError("trajectories are shorter than the rollout horizon");
  if (cover && k > 0) {
    if (cover->horizon < horizon) throw ArgumentError("cover horizon is shorter than the rollout horizon");
    if (cover->n != data.n || cover->m != data.m) throw ArgumentError("cover was built for a different dataset shape");
    for (std::size_t c = 0; c < cover->size(); ++c) {
      if (cover->count(c) >= static_cast<std::size_t>(k)) center_pool_.push_back(static_cast<std::uint32_t>(c));
    }
    if (center_pool_.empty()) {
      throw BatchError("no cover center has at least K=" + std::to_string(k) + " neighbors");
    }
  }
}

namespace {

// Moves a uniform random subset of size `count` to the front of `pool`.
void partial_shuffle(std::vector<std::uint32_t>& pool, std::size_t count, std::mt19937_64& rng) {
  for (std::size_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
}

}  // namespace

SegmentBatch BatchSampler::segments_from(std::span<const std::uint32_t> starts) const {
  SegmentBatch b;
  const auto count = static_cast<Eigen::Index>(starts.size());
  b.start.resize(count, data_.d);
  b.targets.assign(static_cast<std::size_t>(horizon_), RowMat(count, data_.d));
  for (Eigen::Index r = 0; r < count; ++r) {
    const Eigen::Index idx = starts[static_cast<std::size_t>(r)];
    b.start.row(r) = data_.states.row(idx);
    for (int s = 1; s <= horizon_; ++s) b.targets[static_cast<std::size_t>(s - 1)].row(r) = data_.states.row(idx + s);
  }
  return b;
}

SegmentBatch BatchSampler::sample_segments(int count) {
  if (count < 1 || static_cast<std::size_t>(count) > segment_pool_.size()) {
    throw BatchError("cannot draw " + std::to_string(count) + " distinct segments from " +
                     std::to_string(segment_pool_.size()));
  }
  partial_shuffle(segment_pool_, static_cast<std::size_t>(count), rng_);
  return segments_from({segment_pool_.data(), static_cast<std::size_t>(count)});
}

NeighborhoodBatch BatchSampler::sample_neighborhoods(int count) {
  if (!cover_ || k_ < 2) throw BatchError("neighborhood batches need a cover and K >= 2");
  if (count < 1 || static_cast<std::size_t>(count) > center_pool_.size()) {
    throw BatchError("cannot draw " + std::to_string(count) + " distinct centers from " +
                     std::to_string(center_pool_.size()) + " eligible");
  }
  partial_shuffle(center_pool_, static_cast<std::size_t>(count), rng_);
  std::vector<std::uint32_t> centers(static_cast<std::size_t>(count));
  for (int c = 0; c < count; ++c) centers[static_cast<std::size_t>(c)] = cover_->centers[center_pool_[static_cast<std::size_t>(c)]];

  NeighborhoodBatch b;
  b.k = k_;
  b.centers = segments_from(centers);
  const Eigen::Index rows = static_cast<Eigen::Index>(count) * k_;
  b.offsets.resize(rows, data_.d);
  b.neighbor_targets.assign(static_cast<std::size_t>(horizon_), RowMat(rows, data_.d));
  for (int c = 0; c < count; ++c) {
    const auto list = cover_->neighbors(center_pool_[static_cast<std::size_t>(c)]);
    scratch_.assign(list.begin(), list.end());
    partial_shuffle(scratch_, static_cast<std::size_t>(k_), rng_);
    const Eigen::Index center = centers[static_cast<std::size_t>(c)];
    for (int k = 0; k < k_; ++k) {
      const Eigen::Index r = static_cast<Eigen::Index>(c) * k_ + k;
      const Eigen::Index nb = scratch_[static_cast<std::size_t>(k)];
      b.offsets.row(r) = data_.states.row(nb) - data_.states.row(center);
      for (int s = 1; s <= horizon_; ++s) {
        b.neighbor_targets[static_cast<std::size_t>(s - 1)].row(r) = data_.states.row(nb + s);
      }
    }
  }
  return b;
}

SegmentBatch slice(const SegmentBatch& b, int begin, int end) {
  SegmentBatch out;
  out.start = b.start.middleRows(begin, end - begin);
  for (const auto& t : b.targets) out.targets.emplace_back(t.middleRows(begin, end - begin));
  return out;
}

NeighborhoodBatch slice(const NeighborhoodBatch& b, int begin, int end) {
  NeighborhoodBatch out;
  out.k = b.k;
  out.centers = slice(b.centers, begin, end);
  const Eigen::Index r0 = static_cast<Eigen::Index>(begin) * b.k;
  const Eigen::Index rn = static_cast<Eigen::Index>(end - begin) * b.k;
  out.offsets = b.offsets.middleRows(r0, rn);
  for (const auto& t : b.neighbor_targets) out.neighbor_targets.emplace_back(t.middleRows(r0, rn));
  return out;
}

SegmentBatch validation_segments(const TrajectoryDataset& ds, int horizon) {
  if (horizon < 1) throw ArgumentError("horizon must be >= 1");
  std::vector<std::uint32_t> starts;
  for (int i = 0; i < ds.n; ++i) {
    for (int j = 0; j + horizon <= ds.m - 1; j += horizon) starts.push_back(static_cast<std::uint32_t>(i * ds.m + j));
  }
  if (starts.empty()) throw BatchError("validation trajectories are shorter than the rollout horizon");
  SegmentBatch b;
  const auto count = static_cast<Eigen::Index>(starts.size());
  b.start.resize(count, ds.d);
  b.targets.assign(static_cast<std::size_t>(horizon), RowMat(count, ds.d));
  for (Eigen::Index r = 0; r < count; ++r) {
    const Eigen::Index idx = starts[static_cast<std::size_t>(r)];
    b.start.row(r) = ds.states.row(idx);
    for (int s = 1; s <= horizon; ++s) b.targets[static_cast<std::size_t>(s - 1)].row(r) = ds.states.row(idx + s);
  }
  return b;
}

double validation_loss(const MlpVectorField& m, const SegmentBatch& segments, const RolloutSettings& r, int chunk) {
  const int total = segments.size();
  const int chunks = (total + chunk - 1) / chunk;
  std::vector<double> sums(static_cast<std::size_t>(chunks), 0.0);
  const auto params = tensor_params(m);
  try {
    parallel_for(static_cast<std::size_t>(chunks), [&](std::size_t c) {
      const int b = static_cast<int>(c) * chunk;
      const SegmentBatch part = slice(segments, b, std::min(total, b + chunk));
      sums[c] = trajectory_loss_sum<ad::Tensor>(params, part, r).value()(0, 0);
    });
  } catch (const RolloutError&) {
    return std::numeric_limits<double>::infinity();
  }
  double s = 0.0;
  for (double v : sums) s += v;
  const double mean = s / (static_cast<double>(total) * static_cast<double>(segments.targets.size()));
  return std::isfinite(mean) ? mean : std::numeric_limits<double>::infinity();
}

namespace {

struct ChunkResult {
  double traj = 0.0;
  double nbhd = 0.0;
  std::vector<double> grad;
};

StepLoss reduce_chunks(std::vector<ChunkResult>& parts, double norm, double lambda) {
  StepLoss out;
  out.grad.assign(parts.front().grad.size(), 0.0);
  double traj = 0.0, nbhd = 0.0;
  for (const auto& p : parts) {
    traj += p.traj;
    nbhd += p.nbhd;
    for (std::size_t i = 0; i < out.grad.size(); ++i) out.grad[i] += p.grad[i];
  }
  out.traj = traj * norm;
  out.nbhd = nbhd * norm;
  out.total = out.traj + lambda * out.nbhd;
  return out;
}

}  // namespace

StepLoss segment_step_loss(const MlpVectorField& m, const SegmentBatch& b, const RolloutSettings& r, int chunk) {
  const int total = b.size();
  const double norm = 1.0 / (static_cast<double>(total) * static_cast<double>(b.targets.size()));
  const int chunks = (total + chunk - 1) / chunk;
  std::vector<ChunkResult> parts(static_cast<std::size_t>(chunks));
  parallel_for(parts.size(), [&](std::size_t c) {
    const int begin = static_cast<int>(c) * chunk;
    const SegmentBatch part = slice(b, begin, std::min(total, begin + chunk));
    ad::Tape tape;
    const auto params = tape_params(m, tape);
    const ad::Var sum = trajectory_loss_sum<ad::Var>(params, part, r, &tape);
    parts[c].traj = sum.value()(0, 0);
    tape.backward(sum * norm);
    parts[c].grad = gather_grads(params, tape);
  });
  return reduce_chunks(parts, norm, 0.0);
}

StepLoss neighborhood_step_loss(const MlpVectorField& m, const NeighborhoodBatch& b, const RolloutSettings& r,
                                const KernelConfig& kernel, double lambda, int chunk) {
  const int total = b.centers.size();
  const double norm = 1.0 / (static_cast<double>(total) * static_cast<double>(b.centers.targets.size()));
  const int chunks = (total + chunk - 1) / chunk;
  std::vector<ChunkResult> parts(static_cast<std::size_t>(chunks));
  parallel_for(parts.size(), [&](std::size_t c) {
    const int begin = static_cast<int>(c) * chunk;
    const NeighborhoodBatch part = slice(b, begin, std::min(total, begin + chunk));
    ad::Tape tape;
    const auto params = tape_params(m, tape);
    const auto sums = neighborhood_loss_sums<ad::Var>(params, part, r, kernel, &tape);
    parts[c].traj = sums.traj.value()(0, 0);
    parts[c].nbhd = sums.nbhd.value()(0, 0);
    tape.backward(sums.traj * norm + sums.nbhd * (lambda * norm));
    parts[c].grad = gather_grads(params, tape);
  });
  return reduce_chunks(parts, norm, lambda);
}

TrainResult train(const TrajectoryDataset& train_data, const TrajectoryDataset& val_data, const NeighborCover* cover,
                  const TrainConfig& cfg, const std::function<void(const TrainLogRow&)>& progress) {
  cfg.validate();
  tune_allocator();
  if (train_data.d != val_data.d) throw ArgumentError("train and validation dimensions differ");
  if (cfg.uses_neighbors() && cover == nullptr) throw ArgumentError("the neighborhood loss needs a cover");

  std::vector<int> dims{train_data.d};
  dims.insert(dims.end(), cfg.hidden.begin(), cfg.hidden.end());
  dims.push_back(train_data.d);
  MlpVectorField model = init_params(cfg.seed, dims);

  const RolloutSettings rollout{train_data.dt, cfg.n_sub, cfg.taylor_order};
  BatchSampler sampler(train_data, cfg.uses_neighbors() ? cover : nullptr, cfg.horizon, cfg.effective_k(),
                       derive_seed(cfg.seed, 1));
  const SegmentBatch val_segments = validation_segments(val_data, cfg.horizon);
  AdaBeliefState opt = adabelief_init(model.param_count());

  TrainResult result;
  auto emit = [&](const TrainLogRow& row) {
    result.log.push_back(row);
    if (progress) progress(row);
  };

  TrainLogRow first;
  first.has_val = true;
  first.val_loss = validation_loss(model, val_segments, rollout);
  result.best = model;
  result.best_info = {0, first.val_loss};
  emit(first);

  const auto clock_start = std::chrono::steady_clock::now();
  long consecutive = 0;
  std::vector<double> flat = model.flatten();
  for (long step = 1; step <= cfg.steps; ++step) {
    TrainLogRow row;
    row.step = step;
    StepLoss loss;
    bool ok = true;
    try {
      if (cfg.uses_neighbors()) {
        const NeighborhoodBatch batch = sampler.sample_neighborhoods(cfg.centers_per_batch());
        loss = neighborhood_step_loss(model, batch, rollout, cfg.kernel, cfg.lambda, cfg.chunk_centers);
        row.has_nbhd = true;
      } else {
        const SegmentBatch batch = sampler.sample_segments(cfg.centers_per_batch());
        loss = segment_step_loss(model, batch, rollout, cfg.chunk_segments);
      }
      ok = std::isfinite(loss.total);
      for (double g : loss.grad) ok = ok && std::isfinite(g);
    } catch (const RolloutError&) {
      ok = false;
    }

    row.has_train = true;
    if (ok) {
      consecutive = 0;
      row.train_loss = loss.total;
      row.traj_loss = loss.traj;
      row.nbhd_loss = loss.nbhd;
      adabelief_step(flat, loss.grad, opt, cfg.lr, cfg.optimizer);
      model.assign(flat);
    } else {
      ++result.skipped_steps;
      ++consecutive;
      row.skipped = true;
      row.has_nbhd = false;
      row.train_loss = std::numeric_limits<double>::quiet_NaN();
      if (consecutive > cfg.max_consecutive_skips) {
        throw TrainingAbort("training aborted after " + std::to_string(consecutive) +
                            " consecutive non-finite steps (at step " + std::to_string(step) + ")");
      }
    }

    if (step % cfg.val_every == 0 || step == cfg.steps) {
      row.has_val = true;
      row.val_loss = validation_loss(model, val_segments, rollout);
      if (row.val_loss < result.best_info.val_loss) {
        result.best = model;
        result.best_info = {step, row.val_loss};
      }
    }
    if (cfg.log_wallclock) {
      row.wallclock_ms =
          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - clock_start).count();
    }
    emit(row);
  }
  result.last = model;
  return result;
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string format_train_log(const std::vector<TrainLogRow>& log, const TrainConfig& cfg) {
  std::string out = "# val_loss: trajectory loss on the noisy validation split, evaluated every " +
                    std::to_string(cfg.val_every) + " steps\n";
  out += "step,train_loss,traj_loss,nbhd_loss,val_loss,wallclock_ms\n";
  for (const auto& r : log) {
    out += std::to_string(r.step);
    out += ',';
    if (r.has_train) out += format_double(r.train_loss);
    out += ',';
    if (r.has_train && !r.skipped) out += format_double(r.traj_loss);
    out += ',';
    if (r.has_nbhd) out += format_double(r.nbhd_loss);
    out += ',';
    if (r.has_val) out += format_double(r.val_loss);
    out += ',';
    if (r.wallclock_ms >= 0.0) out += format_double(std::round(r.wallclock_ms));
    out += '\n';
  }
  return out;
}

}  // namespace nbode
