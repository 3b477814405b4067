#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <random>
#include <set>

#include "nbode/binary_io.hpp"
#include "nbode/cover.hpp"
#include "nbode/errors.hpp"
#include "nbode/kdtree.hpp"

using namespace nbode;
namespace fs = std::filesystem;

namespace {

RowMat random_points(int n, int d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  RowMat p(n, d);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < d; ++k) p(i, k) = g(rng);
  return p;
}

std::vector<std::uint32_t> brute_annulus(const RowMat& p, Eigen::Index q, double lo, double hi) {
  std::vector<std::uint32_t> out;
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    const double d2 = squared_distance(p.row(i).data(), p.row(q).data(), static_cast<int>(p.cols()));
    if (lo * lo <= d2 && d2 <= hi * hi) out.push_back(static_cast<std::uint32_t>(i));
  }
  return out;
}

std::vector<std::uint32_t> sorted(std::vector<std::uint32_t> v) {
  std::sort(v.begin(), v.end());
  return v;
}

RowMat line_points(int n) {
  RowMat p(n, 1);
  for (int i = 0; i < n; ++i) p(i, 0) = i;
  return p;
}

}  // namespace

TEST_CASE("kd-tree radius queries match brute force") {
  const RowMat p = random_points(2000, 3, 1);
  const KdTree tree(p);
  CHECK(tree.size() == 2000);
  for (int q = 0; q < 2000; q += 37) {
    const std::span<const double> qs(p.row(q).data(), 3);
    for (double r : {0.1, 0.4, 1.0}) {
      CHECK(sorted(tree.query_radius(qs, r)) == brute_annulus(p, q, 0.0, r));
      std::vector<std::uint32_t> ann;
      tree.query_annulus(qs, r / 2, r, ann);
      CHECK(sorted(ann) == brute_annulus(p, q, r / 2, r));
      CHECK(tree.count_annulus(qs, r / 2, r) == ann.size());
    }
  }
  SUBCASE("radius beyond the diameter returns everything") {
    CHECK(tree.query_radius(std::span<const double>(p.row(0).data(), 3), 1e3).size() == 2000);
  }
}

TEST_CASE("kd-tree zero radius returns duplicates") {
  RowMat p = random_points(50, 2, 4);
  p.row(10) = p.row(3);
  p.row(40) = p.row(3);
  const KdTree tree(p, 4);
  CHECK(sorted(tree.query_radius(std::span<const double>(p.row(3).data(), 2), 0.0)) ==
        std::vector<std::uint32_t>{3, 10, 40});
}

TEST_CASE("kd-tree over a row subset reports row numbers") {
  const RowMat p = line_points(20);
  const std::vector<std::uint32_t> rows{2, 5, 6, 7, 15};
  const KdTree tree(p, rows, 2);
  const double q = 6.0;
  CHECK(sorted(tree.query_radius(std::span<const double>(&q, 1), 1.0)) == std::vector<std::uint32_t>{5, 6, 7});
}

TEST_CASE("calibration on a unit grid") {
  const RowMat p = line_points(100);
  CalibrationOptions o;
  o.n_centers = 512;
  const Radii r = calibrate_radii(p, 0.0, o);
  CHECK(r.r_min == 0.0);
  CHECK(r.r_max == doctest::Approx(2.5).epsilon(0.2));
  std::vector<std::uint32_t> all(100);
  for (std::uint32_t i = 0; i < 100; ++i) all[i] = i;
  CHECK(std::abs(mean_annulus_count(p, all, r) / 5.0 - 1.0) <= 0.02);

  SUBCASE("r_min follows the noise level") {
    const Radii rn = calibrate_radii(p, 0.1, o);
    CHECK(rn.r_min == doctest::Approx(0.8));
    CHECK(rn.r_max > rn.r_min);
  }
  SUBCASE("larger targets never shrink r_max") {
    double prev = 0.0;
    for (double f : {0.03, 0.05, 0.1, 0.2}) {
      o.target_frac = f;
      const double rm = calibrate_radii(p, 0.0, o).r_max;
      CHECK(rm >= prev);
      prev = rm;
    }
  }
  SUBCASE("r_min beyond the extent") {
    CHECK_THROWS_AS(calibrate_radii(p, 20.0, o), CalibrationError);
  }
}

TEST_CASE("1d cover neighbors") {
  const RowMat p = line_points(10);
  const NeighborCover c = build_cover(p, 1, 10, {1.5, 3.5}, 1);
  // Centers are j <= m-1-S = 8.
  CHECK(c.size() == 9);
  const auto nb = c.neighbors(5);
  CHECK(std::vector<std::uint32_t>(nb.begin(), nb.end()) == std::vector<std::uint32_t>{2, 3, 7, 8});
}

TEST_CASE("cover equals a brute-force annulus scan") {
  const int n = 4, m = 250, s = 3;
  const RowMat p = random_points(n * m, 3, 8);
  const Radii r{0.3, 0.9};
  const NeighborCover c = build_cover(p, n, m, r, s);
  std::vector<std::uint32_t> eligible;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j <= m - 1 - s; ++j) eligible.push_back(static_cast<std::uint32_t>(i * m + j));
  REQUIRE(c.centers == eligible);
  for (std::size_t k = 0; k < c.size(); ++k) {
    std::vector<std::uint32_t> expect;
    for (std::uint32_t e : eligible) {
      if (e == c.centers[k]) continue;
      const double d2 = squared_distance(p.row(e).data(), p.row(c.centers[k]).data(), 3);
      if (r.r_min * r.r_min <= d2 && d2 <= r.r_max * r.r_max) expect.push_back(e);
    }
    const auto nb = c.neighbors(k);
    CHECK(std::vector<std::uint32_t>(nb.begin(), nb.end()) == expect);
    for (std::uint32_t e : nb) CHECK(static_cast<int>(e % m) + s <= m - 1);
  }
  const OccupancyStats st = c.stats();
  CHECK(st.centers == eligible.size());
  CHECK(st.total_points == static_cast<std::size_t>(n * m));
  CHECK(st.mean == doctest::Approx(static_cast<double>(c.members.size()) / c.size()));
}

TEST_CASE("empty cover is an error") {
  const RowMat p = line_points(10);
  CHECK_THROWS_AS(build_cover(p, 1, 10, {20.0, 30.0}, 1), CoverError);
}

TEST_CASE("cover cache round trip") {
  const RowMat p = random_points(600, 3, 2);
  const NeighborCover c = build_cover(p, 3, 200, {0.2, 0.8}, 2);
  const NeighborCover again = build_cover(p, 3, 200, {0.2, 0.8}, 2);
  CHECK(c == again);
  const fs::path a = fs::temp_directory_path() / "nbode_test_cover_a";
  const fs::path b = fs::temp_directory_path() / "nbode_test_cover_b";
  fs::remove_all(a);
  fs::remove_all(b);
  save_cover(c, a);
  save_cover(again, b);
  CHECK(io::read_bytes(a / "cover.bin") == io::read_bytes(b / "cover.bin"));
  CHECK(load_cover(a) == c);
  fs::remove_all(a);
  fs::remove_all(b);
}
