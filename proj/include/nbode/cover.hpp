#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "nbode/dataset.hpp"
#include "nbode/types.hpp"

namespace nbode {

struct Radii {
  double r_min = 0.0;
  double r_max = 0.0;
};

struct CalibrationOptions {
  double target_frac = 0.05;
  double multiplier = 8.0;
  int n_centers = 512;
  double rel_tol = 0.02;
  std::uint64_t seed = 0;
};

/// r_min = multiplier * noise_std; r_max is found by bisection so that the
/// mean number of points in the annulus [r_min, r_max] around the sampled
/// centers is within rel_tol of target_frac * N. All points serve as centers
/// when N <= n_centers. The count includes the center itself when r_min = 0.
/// Throws CalibrationError if even the whole point cloud falls short of the target.
Radii calibrate_radii(const RowMat& points, double noise_std, const CalibrationOptions& opts = {});

// Mean annulus count around the given centers (all points are candidates).
double mean_annulus_count(const RowMat& points, std::span<const std::uint32_t> centers, Radii radii);

struct OccupancyStats {
  double mean = 0.0;
  std::size_t min = 0;
  std::size_t max = 0;
  std::size_t centers = 0;
  std::size_t empty_centers = 0;
  std::size_t total_points = 0;
};

/// Annulus neighborhoods around every point (i, j) with j <= m-1-S. Neighbors
/// are drawn from the same eligible set, exclude the center itself and are
/// stored as flat indices i*m + j in ascending order.
struct NeighborCover {
  Radii radii;
  int horizon = 1;
  int n = 0;
  int m = 0;
  std::vector<std::uint32_t> centers;
  std::vector<std::uint64_t> offsets;  // centers.size() + 1 entries
  std::vector<std::uint32_t> members;

  std::size_t size() const { return centers.size(); }
  std::span<const std::uint32_t> neighbors(std::size_t c) const {
    return {members.data() + offsets[c], members.data() + offsets[c + 1]};
  }
  std::size_t count(std::size_t c) const { return offsets[c + 1] - offsets[c]; }
  OccupancyStats stats() const;
};

bool operator==(const NeighborCover& a, const NeighborCover& b);

NeighborCover build_cover(const RowMat& points, int n, int m, Radii radii, int horizon);
NeighborCover build_cover(const TrajectoryDataset& ds, Radii radii, int horizon);

// cover.bin plus cover.json (summary) and occupancy.csv (one row per center).
void save_cover(const NeighborCover& cover, const std::filesystem::path& dir);
NeighborCover load_cover(const std::filesystem::path& dir);

}  // namespace nbode
