#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string_view>

#include "nbode/integrate.hpp"
#include "nbode/systems.hpp"
#include "nbode/types.hpp"

namespace nbode {

enum class Split { Train, Val, Test };

std::string_view split_name(Split s);
Split split_from_name(std::string_view name);

/// n trajectories of m states each, stored as an (n*m) x d row matrix with
/// row i*m + j holding trajectory i at time j*dt. States are in normalized
/// coordinates; `clean` holds the noise-free version when available.
struct TrajectoryDataset {
  SystemSpec system;
  Split split = Split::Train;
  int n = 0;
  int m = 0;
  int d = 0;
  double dt = 0.0;
  double tau = 0.0;
  AffineTransform transform;
  double noise_std = 0.0;
  std::uint64_t seed = 0;
  RowMat states;
  std::optional<RowMat> clean;

  Eigen::Index row(int traj, int time) const { return static_cast<Eigen::Index>(traj) * m + time; }
  auto state(int traj, int time) const { return states.row(row(traj, time)); }
  const RowMat& clean_states() const;  // throws ArgumentError if absent
};

struct GenerationOptions {
  int n_traj = 50;
  int m = 1000;
  double dt_fraction = 0.01;  // dt = dt_fraction * tau
  double tau_horizon = 100.0;
  int fft_length = 8192;
  std::optional<double> tau;  // skip estimation when set
  StepControl ctrl = StepControl::data_generation();
};

// Statistics a val/test split borrows from its train split.
struct TrainContext {
  double tau = 0.0;
  AffineTransform transform;
};

TrainContext train_context(const TrajectoryDataset& train);

// Draws n initial conditions and integrates each over the burn-in time; one row per point.
RowMat sample_on_attractor(const SystemSpec& spec, int n, std::uint64_t seed,
                           const StepControl& ctrl = StepControl::data_generation());

// Timescale from trajectories started at `initial` (one row each), sampled at
// fft_length uniform points over [0, horizon).
double estimate_timescale(const SystemSpec& spec, const RowMat& initial, double horizon,
                          int fft_length = 8192,
                          const StepControl& ctrl = StepControl::data_generation());
double estimate_timescale(const SystemSpec& spec, int n_traj, double horizon, std::uint64_t seed,
                          int fft_length = 8192);

// Integrates each initial row and saves m states spaced by dt, starting at t=0.
RowMat simulate_trajectories(const SystemSpec& spec, const RowMat& initial, int m, double dt,
                             const StepControl& ctrl = StepControl::data_generation());

// Per-dimension mean and population standard deviation of the rows.
AffineTransform fit_transform(const RowMat& states);

/// Generates one split. The train split estimates tau (unless given) and fits
/// the normalization; val/test require the train context and throw
/// SequencingError without it. Noise is added after normalization to train and
/// val only. Initial conditions and noise use seeds derived from `seed` and the split.
TrajectoryDataset generate_dataset(const SystemSpec& spec, Split split, double noise_std,
                                   std::uint64_t seed, const TrainContext* train = nullptr,
                                   const GenerationOptions& opts = {});

// Directory layout: meta.json, states.bin, clean.bin (if present).
void save_dataset(const TrajectoryDataset& ds, const std::filesystem::path& dir);
TrajectoryDataset load_dataset(const std::filesystem::path& dir);

}  // namespace nbode
