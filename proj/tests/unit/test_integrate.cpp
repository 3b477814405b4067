#include <doctest.h>

#include <cmath>
#include <vector>

#include "nbode/errors.hpp"
#include "nbode/integrate.hpp"
#include "nbode/systems.hpp"

using namespace nbode;

namespace {

FieldFn linear_field(const Mat& a) {
  return [a](const Vec& u, Vec& du) { du = a * u; };
}

FieldFn system_field(const SystemSpec& s) {
  return [s](const Vec& u, Vec& du) { du = eval_vector_field(s, u); };
}

}  // namespace

TEST_CASE("rk4 zero field and exponential") {
  const FieldFn zero = [](const Vec& u, Vec& du) { du = Vec::Zero(u.size()); };
  const Vec u = Vec::LinSpaced(2, 1.0, 2.0);
  CHECK(rk4_step(zero, u, 0.1) == u);

  const Vec one = Vec::Ones(1);
  const Vec e = rk4_step(linear_field(Mat::Identity(1, 1)), one, 0.01);
  CHECK(std::abs(e[0] - 1.0100501670841678) <= 1e-12);
  CHECK(std::abs(e[0] - std::exp(0.01)) <= 1e-12);
}

TEST_CASE("rk4 on a linear field is the truncated exponential") {
  Mat a(3, 3);
  a << -0.3, 1.2, 0.0, -0.7, 0.1, 0.4, 0.2, -0.5, -1.1;
  const Vec u = Vec::LinSpaced(3, -1.0, 2.0);
  const double h = 0.37;
  const Mat ha = h * a;
  const Mat p = Mat::Identity(3, 3) + ha + ha * ha / 2.0 + ha * ha * ha / 6.0 + ha * ha * ha * ha / 24.0;
  const Vec expect = p * u;
  CHECK((rk4_step(linear_field(a), u, h) - expect).norm() <= 1e-13);
}

TEST_CASE("rk4 reports non-finite stages") {
  const FieldFn blow = [](const Vec& u, Vec& du) { du = u.array().square().inverse(); };
  CHECK_THROWS_AS(rk4_step(blow, Vec::Zero(1), 0.1, 3.0), IntegrationError);
}

TEST_CASE("adaptive integration of simple fields") {
  SUBCASE("zero field is constant") {
    const FieldFn zero = [](const Vec& u, Vec& du) { du = Vec::Zero(u.size()); };
    const Vec u0 = Vec::LinSpaced(3, 1.0, 3.0);
    const std::vector<double> ts{0.0, 0.5, 1.0};
    const Trajectory tr = integrate_adaptive(zero, u0, 0.0, 1.0, StepControl::data_generation(), ts);
    for (int r = 0; r < 3; ++r) CHECK(tr.states.row(r).transpose() == u0);
  }
  SUBCASE("exponential endpoint and dense output") {
    std::vector<double> ts;
    for (int i = 0; i <= 20; ++i) ts.push_back(i / 20.0);
    const Trajectory tr = integrate_adaptive(linear_field(Mat::Identity(1, 1)), Vec::Ones(1), 0.0, 1.0,
                                             StepControl::data_generation(), ts);
    REQUIRE(tr.states.rows() == 21);
    CHECK(std::abs(tr.states(20, 0) - std::exp(1.0)) <= 1e-7);
    for (int i = 0; i <= 20; ++i) CHECK(std::abs(tr.states(i, 0) - std::exp(ts[i])) <= 1e-7);
  }
}

TEST_CASE("adaptive lorenz63 converges to a tight reference") {
  const SystemSpec s = make_system(SystemKind::Lorenz63);
  const std::vector<double> ts{1.0};
  const Vec u0 = Vec::Ones(3);
  const Trajectory loose = integrate_adaptive(system_field(s), u0, 0.0, 1.0, StepControl::data_generation(), ts);
  const Trajectory tight = integrate_adaptive(system_field(s), u0, 0.0, 1.0, {1e-12, 1e-14, 1e-4}, ts);
  const double err = (loose.states.row(0) - tight.states.row(0)).norm();
  CHECK(err <= 1e-5);

  StepControl halved = StepControl::data_generation();
  halved.rtol /= 2;
  halved.atol /= 2;
  const Trajectory half = integrate_adaptive(system_field(s), u0, 0.0, 1.0, halved, ts);
  CHECK((half.states.row(0) - loose.states.row(0)).norm() <= err * 1.5 + 1e-9);

  SUBCASE("deterministic") {
    const Trajectory again = integrate_adaptive(system_field(s), u0, 0.0, 1.0, StepControl::data_generation(), ts);
    CHECK(again.states == loose.states);
    CHECK(again.accepted_steps == loose.accepted_steps);
    CHECK(again.rejected_steps == loose.rejected_steps);
  }
}

TEST_CASE("adaptive integration failures") {
  const std::vector<double> ts{1.0};
  SUBCASE("finite-time blow-up") {
    const FieldFn blow = [](const Vec& u, Vec& du) { du = u.array().square(); };
    bool caught = false;
    try {
      integrate_adaptive(blow, Vec::Ones(1), 0.0, 2.0, StepControl::data_generation(), ts);
    } catch (const IntegrationError& e) {
      caught = true;
      CHECK(e.time() == doctest::Approx(1.0).epsilon(1e-3));
    }
    CHECK(caught);
  }
  SUBCASE("bad control") {
    StepControl c;
    c.rtol = -1.0;
    CHECK_THROWS_AS(c.validate(), ArgumentError);
  }
}

TEST_CASE("modified gram-schmidt") {
  Mat m(3, 3);
  m << 2, 1, 0, 0, 3, 1, 0, 0, 4;
  Mat q = m;
  const Vec r = modified_gram_schmidt(q);
  CHECK((q.transpose() * q - Mat::Identity(3, 3)).norm() <= 1e-14);
  CHECK(r[0] == doctest::Approx(2.0));
  CHECK(r.prod() == doctest::Approx(24.0));
  Mat bad = Mat::Ones(3, 3);
  CHECK_THROWS_AS(modified_gram_schmidt(bad), NumericalError);
}

TEST_CASE("lyapunov spectrum of a diagonal linear system") {
  Mat a = Mat::Zero(2, 2);
  a(0, 0) = -0.4;
  a(1, 1) = 0.25;
  const JacobianFn jac = [a](const Vec&, Mat& j) { j = a; };
  const LyapunovResult r =
      lyapunov_spectrum(linear_field(a), jac, Vec::Ones(2), 20.0, 1.0, StepControl::data_generation());
  CHECK(r.exponents[0] == doctest::Approx(0.25).epsilon(1e-8));
  CHECK(std::abs(r.exponents[0] - 0.25) <= 1e-8);
  CHECK(std::abs(r.exponents[1] + 0.4) <= 1e-8);
}

TEST_CASE("lorenz63 spectrum sums to the divergence") {
  const SystemSpec s = make_system(SystemKind::Lorenz63);
  const JacobianFn jac = [s](const Vec& u, Mat& j) { j = eval_jacobian(s, u); };
  const Vec u0 = (Vec(3) << -5.0, -6.0, 20.0).finished();
  const LyapunovResult r = lyapunov_spectrum(system_field(s), jac, u0, 200.0, 0.5, StepControl::data_generation());
  CHECK(r.exponents.sum() == doctest::Approx(-41.0 / 3.0).epsilon(0.05 / 13.67));
  CHECK(r.exponents[0] >= r.exponents[1]);
  CHECK(r.exponents[1] >= r.exponents[2]);
  CHECK(r.exponents[0] > 0.7);
}
