#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "nbode/model.hpp"

using namespace nbode;
using ad::Tensor;
namespace fs = std::filesystem;

namespace {

RowMat random_rows(int r, int c, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, scale);
  RowMat m(r, c);
  for (int i = 0; i < r; ++i)
    for (int k = 0; k < c; ++k) m(i, k) = g(rng);
  return m;
}

MlpVectorField random_mlp(std::uint64_t seed, int d = 3, int hidden = 16) {
  MlpVectorField m = init_params(seed, {d, hidden, hidden, d});
  for (std::size_t l = 0; l < m.biases.size(); ++l) {
    m.biases[l] = random_rows(1, static_cast<int>(m.biases[l].cols()), seed + 50 + l, 0.2);
  }
  return m;
}

MlpVectorField zero_model(int d) {
  MlpVectorField m = init_params(0, default_dims(d));
  std::vector<double> z(m.param_count(), 0.0);
  m.assign(z);
  return m;
}

// Single affine layer du/dt = W u + b.
MlpVectorField linear_model(const RowMat& w, const RowMat& b) {
  const int d = static_cast<int>(w.rows());
  MlpVectorField m = init_params(0, {d, d}, Activation::Identity);
  m.weights[0] = w;
  m.biases[0] = b;
  return m;
}

}  // namespace

TEST_CASE("initialization") {
  const MlpVectorField a = init_params(7, default_dims(3));
  const MlpVectorField b = init_params(7, default_dims(3));
  CHECK(a.dims == std::vector<int>{3, 64, 64, 3});
  CHECK(a.flatten() == b.flatten());
  CHECK(init_params(8, default_dims(3)).flatten() != a.flatten());
  CHECK(a.param_count() == 3 * 64 + 64 + 64 * 64 + 64 + 64 * 3 + 3);
  CHECK(a.flatten().size() == a.param_count());
  for (std::size_t l = 0; l < a.weights.size(); ++l) {
    CHECK(a.biases[l].norm() == 0.0);
    const double bound = std::sqrt(1.0 / a.dims[l]);
    CHECK(a.weights[l].cwiseAbs().maxCoeff() <= bound);
    CHECK(a.weights[l].rows() == a.dims[l + 1]);
    CHECK(a.weights[l].cols() == a.dims[l]);
  }
  CHECK(model_field(a, Vec::Zero(3)).norm() == 0.0);
}

TEST_CASE("zero and linear models") {
  const MlpVectorField z = zero_model(3);
  const Vec u = Vec::LinSpaced(3, -2.0, 5.0);
  CHECK(model_field(z, u).norm() == 0.0);
  CHECK(model_jacobian(z, u).norm() == 0.0);

  const RowMat w = random_rows(3, 3, 1), b = random_rows(1, 3, 2);
  const MlpVectorField lin = linear_model(w, b);
  const Vec expect = w * u + b.row(0).transpose();
  CHECK((model_field(lin, u) - expect).norm() <= 1e-14);
  CHECK(model_jacobian(lin, u) == Mat(w));

  const auto p = tensor_params(z);
  const auto traj = rollout_center(p, Tensor(random_rows(2, 3, 3)), 4, 0.1, 2);
  for (const Tensor& s : traj) CHECK(s.value() == random_rows(2, 3, 3));
}

TEST_CASE("jacobian and batch evaluation") {
  const MlpVectorField m = random_mlp(4);
  std::mt19937_64 rng(9);
  for (int i = 0; i < 20; ++i) {
    const Vec u = random_rows(3, 1, 100 + i).col(0);
    Mat fd(3, 3);
    const double h = 1e-5;
    for (int c = 0; c < 3; ++c) {
      Vec up = u, um = u;
      up[c] += h;
      um[c] -= h;
      fd.col(c) = (model_field(m, up) - model_field(m, um)) / (2 * h);
    }
    const Mat j = model_jacobian(m, u);
    CHECK((j - fd).norm() / j.norm() <= 1e-7);
  }
  const RowMat x = random_rows(5, 3, 10);
  const RowMat fb = model_field_batch(m, x);
  for (int r = 0; r < 5; ++r) {
    CHECK((fb.row(r).transpose() - model_field(m, x.row(r).transpose())).norm() <= 1e-14);
  }
}

TEST_CASE("linear rollout matches the exponential") {
  const MlpVectorField m = linear_model(RowMat::Ones(1, 1), RowMat::Zero(1, 1));
  const auto p = tensor_params(m);
  const double dt = 0.05;
  const int n_sub = 2;
  const auto traj = rollout_center(p, Tensor(RowMat::Ones(1, 1)), 10, dt, n_sub);
  const double h = dt / n_sub;
  // Global RK4 error: 20 steps of local error ~ h^5/120 each, amplified by e.
  for (int s = 1; s <= 10; ++s) {
    const double err = std::abs(traj[s - 1].value()(0, 0) - std::exp(s * dt));
    CHECK(err <= std::exp(s * dt) * s * n_sub * std::pow(h, 5) / 100.0);
  }
  CHECK_THROWS_AS(rollout_center(p, Tensor(RowMat::Ones(1, 1)), 1, 0.0, 1), ArgumentError);
}

TEST_CASE("rollout divergence reports the step") {
  const MlpVectorField m = linear_model(RowMat::Constant(1, 1, 2000.0), RowMat::Zero(1, 1));
  const auto p = tensor_params(m);
  try {
    rollout_center(p, Tensor(RowMat::Ones(1, 1)), 500, 0.5, 1);
    FAIL("expected a rollout error");
  } catch (const RolloutError& e) {
    CHECK(e.step() > 1);
    CHECK(e.step() <= 500);
  }
}

TEST_CASE("neighborhood rollout") {
  const MlpVectorField m = random_mlp(12);
  const auto p = tensor_params(m);
  const RowMat u0 = random_rows(2, 3, 13);
  const RowMat w0 = random_rows(6, 3, 14, 0.1);
  const auto roll = rollout_neighborhood(p, Tensor(u0), Tensor(w0), 3, 0.02, 2);
  const auto center = rollout_center(p, Tensor(u0), 3, 0.02, 2);

  SUBCASE("center is bit-identical to the plain rollout") {
    for (int s = 0; s < 3; ++s) CHECK(roll.center[s].value() == center[s].value());
  }
  SUBCASE("zero offsets stay zero") {
    const auto z = rollout_neighborhood(p, Tensor(u0), Tensor(RowMat::Zero(6, 3)), 3, 0.02, 2);
    for (int s = 0; s < 3; ++s) {
      CHECK(z.perturb[s].value().norm() == 0.0);
      CHECK(z.neighbors[s].value().row(0) == center[s].value().row(0));
    }
  }
  SUBCASE("permuting neighbors permutes the output") {
    RowMat wp = w0;
    wp.row(0) = w0.row(2);
    wp.row(2) = w0.row(0);
    const auto q = rollout_neighborhood(p, Tensor(u0), Tensor(wp), 3, 0.02, 2);
    CHECK(q.perturb[2].value().row(0) == roll.perturb[2].value().row(2));
    CHECK(q.perturb[2].value().row(2) == roll.perturb[2].value().row(0));
    CHECK(q.perturb[2].value().bottomRows(3) == roll.perturb[2].value().bottomRows(3));
  }
}

TEST_CASE("linear dynamics make the perturbation rollout exact") {
  const RowMat w = random_rows(3, 3, 20, 0.5), b = random_rows(1, 3, 21);
  const auto p = tensor_params(linear_model(w, b));
  const RowMat u0 = random_rows(1, 3, 22);
  const RowMat w0 = random_rows(4, 3, 23);
  const auto roll = rollout_neighborhood(p, Tensor(u0), Tensor(w0), 5, 0.1, 2);
  const RowMat starts = w0.rowwise() + u0.row(0);
  const auto direct = rollout_center(p, Tensor(starts), 5, 0.1, 2);
  for (int s = 0; s < 5; ++s) CHECK((roll.neighbors[s].value() - direct[s].value()).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("second-order reconstruction error scales cubically") {
  const MlpVectorField m = random_mlp(30);
  const auto p = tensor_params(m);
  const RowMat u0 = random_rows(1, 3, 31);
  const RowMat dir = random_rows(1, 3, 32).normalized();
  std::vector<double> le, lw;
  for (double scale : {1e-1, 1e-2, 1e-3}) {
    const RowMat w0 = scale * dir;
    const auto roll = rollout_neighborhood(p, Tensor(u0), Tensor(w0), 1, 0.1, 2);
    const auto direct = rollout_center(p, Tensor(RowMat(u0 + w0)), 1, 0.1, 2);
    le.push_back(std::log10((roll.neighbors[0].value() - direct[0].value()).norm()));
    lw.push_back(std::log10(scale));
  }
  const double slope = ((le[0] - le[2]) / (lw[0] - lw[2]));
  CHECK(slope >= 2.7);

  SUBCASE("first order only loses an order") {
    std::vector<double> e1;
    for (double scale : {1e-1, 1e-2}) {
      const RowMat w0 = scale * dir;
      const auto roll = rollout_neighborhood(p, Tensor(u0), Tensor(w0), 1, 0.1, 2, 1);
      const auto direct = rollout_center(p, Tensor(RowMat(u0 + w0)), 1, 0.1, 2);
      e1.push_back(std::log10((roll.neighbors[0].value() - direct[0].value()).norm()));
    }
    CHECK(e1[0] - e1[1] == doctest::Approx(2.0).epsilon(0.1));
  }
}

TEST_CASE("gradient of a rollout matches finite differences") {
  const MlpVectorField m = random_mlp(40, 3, 8);
  const RowMat u0 = random_rows(2, 3, 41);
  auto loss = [&](const MlpVectorField& q) {
    const auto traj = rollout_center(tensor_params(q), Tensor(u0), 1, 0.1, 2);
    return traj[0].value().squaredNorm();
  };
  ad::Tape tape;
  const auto p = tape_params(m, tape);
  const auto traj = rollout_center(p, tape.constant(u0), 1, 0.1, 2);
  const ad::Var y = sum(traj[0] * traj[0]);
  tape.backward(y);
  const std::vector<double> g = gather_grads(p, tape);
  std::vector<double> flat = m.flatten();
  MlpVectorField q = m;
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < flat.size(); i += 3) {
    const double keep = flat[i];
    flat[i] = keep + 1e-5;
    q.assign(flat);
    const double a = loss(q);
    flat[i] = keep - 1e-5;
    q.assign(flat);
    const double b = loss(q);
    flat[i] = keep;
    const double d = (a - b) / 2e-5;
    num += (d - g[i]) * (d - g[i]);
    den += d * d;
  }
  CHECK(std::sqrt(num / den) <= 1e-5);
}

TEST_CASE("checkpoint round trip") {
  const MlpVectorField m = random_mlp(50);
  const fs::path dir = fs::temp_directory_path() / "nbode_test_model";
  fs::remove_all(dir);
  save_model(m, dir, {123, 0.25});
  CheckpointInfo info;
  const MlpVectorField back = load_model(dir, &info);
  CHECK(info.step == 123);
  CHECK(info.val_loss == 0.25);
  CHECK(back.dims == m.dims);
  CHECK(back.seed == m.seed);
  const RowMat x = random_rows(10, 3, 51);
  CHECK(model_field_batch(back, x) == model_field_batch(m, x));
  fs::remove_all(dir);
  CHECK_THROWS_AS(load_model(dir), Error);
}
