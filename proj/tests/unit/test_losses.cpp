#include <doctest.h>

#include <cmath>
#include <random>

#include "nbode/losses.hpp"
#include "nbode/train.hpp"

using namespace nbode;
using ad::Tensor;

namespace {

RowMat random_rows(int r, int c, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, scale);
  RowMat m(r, c);
  for (int i = 0; i < r; ++i)
    for (int k = 0; k < c; ++k) m(i, k) = g(rng);
  return m;
}

MlpVectorField random_mlp(std::uint64_t seed, int d = 3, int hidden = 8) {
  MlpVectorField m = init_params(seed, {d, hidden, hidden, d});
  for (std::size_t l = 0; l < m.biases.size(); ++l) {
    m.biases[l] = random_rows(1, static_cast<int>(m.biases[l].cols()), seed + 70 + l, 0.2);
  }
  return m;
}

// Direct transcription of the estimator: distinct within-sample pairs over
// K(K-1), all cross pairs over K^2.
double mmd2_oracle(const RowMat& x, const RowMat& y, const KernelConfig& cfg) {
  const auto k = static_cast<double>(x.rows());
  auto kern = [&](const RowMat& a, Eigen::Index i, const RowMat& b, Eigen::Index j) {
    return rq_kernel(a.row(i).transpose(), b.row(j).transpose(), cfg);
  };
  double xx = 0, yy = 0, xy = 0;
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < x.rows(); ++j) {
      if (i != j) {
        xx += kern(x, i, x, j);
        yy += kern(y, i, y, j);
      }
      xy += kern(x, i, y, j);
    }
  return xx / (k * (k - 1)) + yy / (k * (k - 1)) - 2 * xy / (k * k);
}

// Random batch with B centers, K neighbors each and S steps of targets.
NeighborhoodBatch random_batch(int b, int k, int s, int d, std::uint64_t seed) {
  NeighborhoodBatch nb;
  nb.k = k;
  nb.centers.start = random_rows(b, d, seed);
  nb.offsets = random_rows(b * k, d, seed + 1, 0.3);
  for (int i = 0; i < s; ++i) {
    nb.centers.targets.push_back(random_rows(b, d, seed + 10 + i));
    nb.neighbor_targets.push_back(random_rows(b * k, d, seed + 20 + i));
  }
  return nb;
}

}  // namespace

TEST_CASE("rational quadratic kernel") {
  const KernelConfig cfg;
  const Vec u = Vec::LinSpaced(3, 0.5, 1.5);
  CHECK(rq_kernel(u, u, cfg) == 4.0);
  Vec v = u;
  v[1] += 1.0;
  CHECK(std::abs(rq_kernel(u, v, cfg) - 1.314229) <= 1e-6);
  const Vec w = Vec::LinSpaced(3, -2.0, 7.0);
  CHECK(rq_kernel(u, w, cfg) == rq_kernel(w, u, cfg));
  KernelConfig bad;
  bad.bandwidths = {0.2, 0.0};
  CHECK_THROWS_AS(bad.validate(), ArgumentError);
}

TEST_CASE("mmd2 estimator") {
  const KernelConfig cfg;
  SUBCASE("two points at unit distance") {
    RowMat x(2, 2);
    x << 0, 0, 1, 0;
    CHECK(std::abs(mmd2(x, x, cfg) - (-2.685771)) <= 1e-6);
  }
  SUBCASE("repeated point") {
    RowMat x(2, 3);
    x << 1, 2, 3, 1, 2, 3;
    CHECK(mmd2(x, x, cfg) == doctest::Approx(0.0).epsilon(1e-15));
  }
  SUBCASE("matches the oracle and is translation invariant") {
    const RowMat x = random_rows(7, 3, 1), y = random_rows(7, 3, 2);
    const double v = mmd2(x, y, cfg);
    CHECK(v == doctest::Approx(mmd2_oracle(x, y, cfg)).epsilon(1e-13));
    const Eigen::RowVector3d t(3.0, -1.5, 0.25);
    CHECK(mmd2(x.rowwise() + t, y.rowwise() + t, cfg) == doctest::Approx(v).epsilon(1e-13));
  }
  SUBCASE("biased variant is non-negative") {
    const RowMat x = random_rows(6, 2, 3);
    CHECK(mmd2_biased(x, x, cfg) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(mmd2_biased(x, random_rows(6, 2, 4), cfg) >= 0.0);
  }
  SUBCASE("too few samples") {
    CHECK_THROWS_AS(mmd2(random_rows(1, 2, 5), random_rows(1, 2, 6), cfg), ArgumentError);
  }
  SUBCASE("grouped sum over all value types") {
    const RowMat model = random_rows(6, 3, 7), data = random_rows(6, 3, 8);
    const double expect = mmd2(data.topRows(3), model.topRows(3), cfg) + mmd2(data.bottomRows(3), model.bottomRows(3), cfg);
    CHECK(mmd2_grouped_sum(model, data, 3, cfg) == doctest::Approx(expect).epsilon(1e-13));
    CHECK(mmd2_grouped_sum(Tensor(model), data, 3, cfg).value()(0, 0) == doctest::Approx(expect).epsilon(1e-13));
    ad::Tape tape;
    const ad::Var mv = tape.leaf(model);
    const ad::Var s = mmd2_grouped_sum(mv, data, 3, cfg);
    CHECK(s.value()(0, 0) == doctest::Approx(expect).epsilon(1e-13));
    tape.backward(s);
    const RowMat g = tape.grad(mv);
    const double h = 1e-6;
    RowMat a = model, b = model;
    a(4, 1) += h;
    b(4, 1) -= h;
    const double fd = (mmd2_grouped_sum(a, data, 3, cfg) - mmd2_grouped_sum(b, data, 3, cfg)) / (2 * h);
    CHECK(g(4, 1) == doctest::Approx(fd).epsilon(1e-7));
  }
}

TEST_CASE("trajectory loss") {
  const MlpVectorField m = random_mlp(1);
  const RolloutSettings r{0.01, 2, 2};
  SUBCASE("model-generated data") {
    SegmentBatch b;
    b.start = random_rows(5, 3, 2);
    const auto fine = rollout_center(tensor_params(m), Tensor(b.start), 4, 0.01, 64);
    for (const Tensor& s : fine) b.targets.push_back(s.value());
    CHECK(trajectory_loss(m, b, r) <= 1e-8);
  }
  SUBCASE("zero model on zero data") {
    MlpVectorField z = m;
    z.assign(std::vector<double>(z.param_count(), 0.0));
    SegmentBatch b{RowMat::Zero(3, 3), {RowMat::Zero(3, 3), RowMat::Zero(3, 3)}};
    CHECK(trajectory_loss(z, b, r) == 0.0);
  }
  SUBCASE("segment order does not matter") {
    SegmentBatch b{random_rows(4, 3, 3), {random_rows(4, 3, 4), random_rows(4, 3, 5)}};
    SegmentBatch p = b;
    p.start.row(0).swap(p.start.row(3));
    for (RowMat& t : p.targets) t.row(0).swap(t.row(3));
    CHECK(trajectory_loss(m, p, r) == doctest::Approx(trajectory_loss(m, b, r)).epsilon(1e-14));
  }
}

TEST_CASE("neighborhood loss") {
  const MlpVectorField m = random_mlp(11);
  const RolloutSettings r{0.01, 2, 2};
  const KernelConfig cfg;

  SUBCASE("single center with two neighbors") {
    NeighborhoodBatch b = random_batch(1, 2, 1, 3, 12);
    const auto roll = rollout_neighborhood(tensor_params(m), Tensor(b.centers.start), Tensor(b.offsets), 1, r.dt, r.n_sub);
    const double expect = mmd2_oracle(b.neighbor_targets[0], roll.neighbors[0].value(), cfg);
    CHECK(neighborhood_loss(m, b, r, cfg) == doctest::Approx(expect).epsilon(1e-12));
  }
  SUBCASE("model-generated noiseless neighbors") {
    NeighborhoodBatch b = random_batch(3, 4, 3, 3, 13);
    b.offsets *= 0.1;
    RowMat starts(12, 3);
    for (int c = 0; c < 3; ++c)
      for (int k = 0; k < 4; ++k) starts.row(c * 4 + k) = b.centers.start.row(c) + b.offsets.row(c * 4 + k);
    const auto fine = rollout_center(tensor_params(m), Tensor(starts), 3, r.dt, 64);
    double floor = 0.0;
    for (int s = 0; s < 3; ++s) {
      b.neighbor_targets[s] = fine[s].value();
      floor += mmd2_grouped_sum(b.neighbor_targets[s], b.neighbor_targets[s], 4, cfg);
    }
    floor /= 9.0;
    const double loss = neighborhood_loss(m, b, r, cfg);
    CHECK(loss <= 1e-4);
    CHECK(std::abs(loss - floor) <= 1e-4);
  }
  SUBCASE("empty batch") {
    NeighborhoodBatch b = random_batch(1, 2, 1, 3, 14);
    b = slice(b, 0, 0);
    CHECK_THROWS_AS(neighborhood_loss(m, b, r, cfg), BatchError);
  }
}

TEST_CASE("full loss gradient matches finite differences") {
  const MlpVectorField m = random_mlp(21, 3, 8);
  const RolloutSettings r{0.05, 2, 2};
  const KernelConfig cfg;
  const NeighborhoodBatch b = random_batch(4, 3, 2, 3, 22);
  const double lambda = 0.7;
  auto total = [&](const MlpVectorField& q) {
    return trajectory_loss(q, b.centers, r) + lambda * neighborhood_loss(q, b, r, cfg);
  };
  const StepLoss sl = neighborhood_step_loss(m, b, r, cfg, lambda, 1);
  CHECK(sl.total == doctest::Approx(total(m)).epsilon(1e-12));
  CHECK(sl.traj == doctest::Approx(trajectory_loss(m, b.centers, r)).epsilon(1e-12));
  CHECK(sl.nbhd == doctest::Approx(neighborhood_loss(m, b, r, cfg)).epsilon(1e-12));

  std::vector<double> flat = m.flatten();
  std::mt19937_64 rng(23);
  std::uniform_int_distribution<std::size_t> pick(0, flat.size() - 1);
  MlpVectorField q = m;
  for (int t = 0; t < 20; ++t) {
    const std::size_t i = pick(rng);
    const double keep = flat[i], h = 1e-5;
    flat[i] = keep + h;
    q.assign(flat);
    const double a = total(q);
    flat[i] = keep - h;
    q.assign(flat);
    const double c = total(q);
    flat[i] = keep;
    const double fd = (a - c) / (2 * h);
    CHECK(std::abs(sl.grad[i] - fd) <= 1e-5 * std::max(std::abs(fd), 1e-3));
  }

  SUBCASE("chunking does not change the result") {
    const StepLoss one = neighborhood_step_loss(m, b, r, cfg, lambda, 16);
    CHECK(one.total == doctest::Approx(sl.total).epsilon(1e-14));
    for (std::size_t i = 0; i < one.grad.size(); ++i) CHECK(one.grad[i] == doctest::Approx(sl.grad[i]).epsilon(1e-12));
  }
  SUBCASE("lambda zero reduces to the trajectory loss") {
    const StepLoss z = neighborhood_step_loss(m, b, r, cfg, 0.0, 2);
    const StepLoss seg = segment_step_loss(m, b.centers, r, 2);
    CHECK(z.total == seg.total);
    for (std::size_t i = 0; i < z.grad.size(); ++i) CHECK(z.grad[i] == doctest::Approx(seg.grad[i]).epsilon(1e-14));
  }
}
