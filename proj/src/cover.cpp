#include "nbode/cover.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <string>

#include <json.hpp>

#include "nbode/binary_io.hpp"
#include "nbode/errors.hpp"
#include "nbode/kdtree.hpp"
#include "nbode/parallel.hpp"

namespace nbode {

namespace {

constexpr char kMagic[] = "NBCOVER1";
constexpr std::uint32_t kVersion = 1;

std::span<const double> row_span(const RowMat& points, std::uint32_t r) {
  return {points.data() + static_cast<std::size_t>(r) * points.cols(), static_cast<std::size_t>(points.cols())};
}

double mean_count(const KdTree& tree, const RowMat& points, std::span<const std::uint32_t> centers,
                  Radii radii) {
  std::vector<std::size_t> counts(centers.size());
  parallel_for(centers.size(), [&](std::size_t c) {
    counts[c] = tree.count_annulus(row_span(points, centers[c]), radii.r_min, radii.r_max);
  });
  const double total = std::accumulate(counts.begin(), counts.end(), 0.0);
  return total / static_cast<double>(centers.size());
}

}  // namespace

double mean_annulus_count(const RowMat& points, std::span<const std::uint32_t> centers, Radii radii) {
  if (centers.empty()) throw ArgumentError("no centers given");
  const KdTree tree(points);
  return mean_count(tree, points, centers, radii);
}

Radii calibrate_radii(const RowMat& points, double noise_std, const CalibrationOptions& opts) {
  if (!(opts.target_frac > 0.0 && opts.target_frac < 1.0)) throw ArgumentError("target_frac must be in (0, 1)");
  if (!(noise_std >= 0.0) || !(opts.multiplier >= 0.0)) throw ArgumentError("noise_std and multiplier must be >= 0");
  if (points.rows() == 0) throw ArgumentError("no points to calibrate on");
  const auto total = static_cast<std::size_t>(points.rows());

  std::vector<std::uint32_t> centers(total);
  std::iota(centers.begin(), centers.end(), 0u);
  if (opts.n_centers > 0 && total > static_cast<std::size_t>(opts.n_centers)) {
    std::mt19937_64 rng(opts.seed);
    for (std::size_t i = 0; i < static_cast<std::size_t>(opts.n_centers); ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, total - 1);
      std::swap(centers[i], centers[pick(rng)]);
    }
    centers.resize(static_cast<std::size_t>(opts.n_centers));
  }

  const KdTree tree(points);
  Radii r{opts.multiplier * noise_std, 0.0};
  const double target = opts.target_frac * static_cast<double>(total);
  auto count_at = [&](double r_max) { return mean_count(tree, points, centers, {r.r_min, r_max}); };
  auto within = [&](double c) { return std::abs(c - target) <= opts.rel_tol * target; };

  const Vec extent = points.colwise().maxCoeff() - points.colwise().minCoeff();
  double hi = r.r_min + extent.norm() * (1 + 1e-9) + 1e-300;
  const double c_hi = count_at(hi);
  if (c_hi < target * (1 - opts.rel_tol)) {
    throw CalibrationError("annulus cannot reach the target occupancy; r_min=" + std::to_string(r.r_min) +
                           " is too large for the data extent");
  }
  double lo = r.r_min;
  double best = hi, best_gap = std::abs(c_hi - target);
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double c = count_at(mid);
    if (std::abs(c - target) < best_gap) {
      best = mid;
      best_gap = std::abs(c - target);
    }
    if (within(c)) break;
    if (c < target) {
      lo = mid;
    } else {
      hi = mid;
    }
    if (hi - lo <= 1e-12 * std::max(1.0, hi)) break;
  }
  r.r_max = best;
  return r;
}

OccupancyStats NeighborCover::stats() const {
  OccupancyStats s;
  s.centers = centers.size();
  s.total_points = static_cast<std::size_t>(n) * static_cast<std::size_t>(m);
  if (centers.empty()) return s;
  s.min = count(0);
  double sum = 0.0;
  for (std::size_t c = 0; c < centers.size(); ++c) {
    const std::size_t k = count(c);
    s.min = std::min(s.min, k);
    s.max = std::max(s.max, k);
    if (k == 0) ++s.empty_centers;
    sum += static_cast<double>(k);
  }
  s.mean = sum / static_cast<double>(centers.size());
  return s;
}

bool operator==(const NeighborCover& a, const NeighborCover& b) {
  return a.radii.r_min == b.radii.r_min && a.radii.r_max == b.radii.r_max && a.horizon == b.horizon &&
         a.n == b.n && a.m == b.m && a.centers == b.centers && a.offsets == b.offsets && a.members == b.members;
}

NeighborCover build_cover(const RowMat& points, int n, int m, Radii radii, int horizon) {
  if (horizon < 1) throw ArgumentError("cover horizon must be >= 1");
  if (points.rows() != static_cast<Eigen::Index>(n) * m) throw ArgumentError("points do not match n*m");
  if (!(radii.r_max > radii.r_min) || radii.r_min < 0.0) throw ArgumentError("need 0 <= r_min < r_max");
  if (horizon > m - 1) throw CoverError("horizon " + std::to_string(horizon) + " leaves no usable centers");

  NeighborCover cover;
  cover.radii = radii;
  cover.horizon = horizon;
  cover.n = n;
  cover.m = m;
  const int last = m - 1 - horizon;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j <= last; ++j) cover.centers.push_back(static_cast<std::uint32_t>(i * m + j));
  }

  const KdTree tree(points, cover.centers);
  std::vector<std::vector<std::uint32_t>> lists(cover.centers.size());
  parallel_for(cover.centers.size(), [&](std::size_t c) {
    auto& list = lists[c];
    tree.query_annulus(row_span(points, cover.centers[c]), radii.r_min, radii.r_max, list);
    std::erase(list, cover.centers[c]);
    std::sort(list.begin(), list.end());
  });

  cover.offsets.reserve(lists.size() + 1);
  cover.offsets.push_back(0);
  std::size_t total = 0;
  for (const auto& l : lists) total += l.size();
  cover.members.reserve(total);
  for (auto& l : lists) {
    cover.members.insert(cover.members.end(), l.begin(), l.end());
    cover.offsets.push_back(cover.members.size());
    std::vector<std::uint32_t>().swap(l);
  }
  if (cover.members.empty()) {
    throw CoverError("no center has a neighbor in [" + std::to_string(radii.r_min) + ", " +
                     std::to_string(radii.r_max) + "]; recalibrate the radii");
  }
  return cover;
}

NeighborCover build_cover(const TrajectoryDataset& ds, Radii radii, int horizon) {
  return build_cover(ds.states, ds.n, ds.m, radii, horizon);
}

void save_cover(const NeighborCover& cover, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<std::uint8_t> buf(kMagic, kMagic + 8);
  io::append_u32(buf, kVersion);
  io::append_f64(buf, cover.radii.r_min);
  io::append_f64(buf, cover.radii.r_max);
  io::append_u32(buf, static_cast<std::uint32_t>(cover.horizon));
  io::append_u32(buf, static_cast<std::uint32_t>(cover.n));
  io::append_u32(buf, static_cast<std::uint32_t>(cover.m));
  io::append_u64(buf, cover.centers.size());
  for (std::size_t c = 0; c < cover.size(); ++c) {
    io::append_varint(buf, cover.centers[c]);
    const auto list = cover.neighbors(c);
    io::append_varint(buf, list.size());
    // Ascending lists are stored as gaps from the previous index.
    std::uint32_t prev = 0;
    for (std::uint32_t idx : list) {
      io::append_varint(buf, idx - prev);
      prev = idx;
    }
  }
  io::write_bytes(dir / "cover.bin", buf);

  const OccupancyStats s = cover.stats();
  nlohmann::ordered_json summary;
  summary["r_min"] = cover.radii.r_min;
  summary["r_max"] = cover.radii.r_max;
  summary["horizon"] = cover.horizon;
  summary["n"] = cover.n;
  summary["m"] = cover.m;
  summary["centers"] = s.centers;
  summary["total_points"] = s.total_points;
  summary["mean_count"] = s.mean;
  summary["mean_fraction"] = s.total_points ? s.mean / static_cast<double>(s.total_points) : 0.0;
  summary["min_count"] = s.min;
  summary["max_count"] = s.max;
  summary["empty_centers"] = s.empty_centers;
  io::write_text(dir / "cover.json", summary.dump(2) + "\n");

  std::string csv = "center,trajectory,time,count\n";
  for (std::size_t c = 0; c < cover.size(); ++c) {
    const std::uint32_t idx = cover.centers[c];
    csv += std::to_string(idx) + "," + std::to_string(idx / cover.m) + "," + std::to_string(idx % cover.m) +
           "," + std::to_string(cover.count(c)) + "\n";
  }
  io::write_text(dir / "occupancy.csv", csv);
}

NeighborCover load_cover(const std::filesystem::path& dir) {
  const auto bytes = io::read_bytes(dir / "cover.bin");
  io::Reader in(bytes);
  const auto magic = in.take(8);
  if (!std::equal(magic.begin(), magic.end(), kMagic)) throw FormatError("not a cover file: " + dir.string());
  if (in.u32() != kVersion) throw FormatError("unsupported cover version in " + dir.string());
  NeighborCover cover;
  cover.radii.r_min = in.f64();
  cover.radii.r_max = in.f64();
  cover.horizon = static_cast<int>(in.u32());
  cover.n = static_cast<int>(in.u32());
  cover.m = static_cast<int>(in.u32());
  const std::uint64_t count = in.u64();
  const std::uint64_t limit = static_cast<std::uint64_t>(cover.n) * static_cast<std::uint64_t>(cover.m);
  if (count > limit) throw FormatError("cover center count exceeds dataset size");
  cover.centers.reserve(count);
  cover.offsets.reserve(count + 1);
  cover.offsets.push_back(0);
  for (std::uint64_t c = 0; c < count; ++c) {
    const std::uint64_t center = in.varint();
    const std::uint64_t k = in.varint();
    if (center >= limit || k > limit) throw FormatError("cover index out of range");
    cover.centers.push_back(static_cast<std::uint32_t>(center));
    std::uint64_t prev = 0;
    for (std::uint64_t e = 0; e < k; ++e) {
      prev += in.varint();
      if (prev >= limit) throw FormatError("cover neighbor index out of range");
      cover.members.push_back(static_cast<std::uint32_t>(prev));
    }
    cover.offsets.push_back(cover.members.size());
  }
  if (!in.done()) throw FormatError("trailing bytes in cover file");
  return cover;
}

}  // namespace nbode
