#include "nbode/integrate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "nbode/errors.hpp"

namespace nbode {

namespace {

// Tsitouras (2011) 5(4) tableau; b equals the last row of A (FSAL).
constexpr double c2 = 0.161, c3 = 0.327, c4 = 0.9, c5 = 0.9800255409045097;
constexpr double a21 = 0.161;
constexpr double a31 = -0.008480655492356989, a32 = 0.335480655492357;
constexpr double a41 = 2.897153057105493, a42 = -6.359448489975075, a43 = 4.3622954328695815;
constexpr double a51 = 5.325864828439257, a52 = -11.748883564062828, a53 = 7.4955393428898365,
                 a54 = -0.09249506636175525;
constexpr double a61 = 5.86145544294642, a62 = -12.92096931784711, a63 = 8.159367898576159,
                 a64 = -0.071584973281401, a65 = -0.028269050394068383;
constexpr double a71 = 0.09646076681806523, a72 = 0.01, a73 = 0.4798896504144996,
                 a74 = 1.379008574103742, a75 = -3.290069515436081, a76 = 2.324710524099774;
// b - b_hat
constexpr double e1 = -0.00178001105222577714, e2 = -0.0008164344596567469,
                 e3 = 0.007880878010261995, e4 = -0.1447110071732629, e5 = 0.5823571654525552,
                 e6 = -0.45808210592918697, e7 = 0.015151515151515152;

// Continuous extension: u(t + th h) = u + h sum_i b_i(th) k_i, fourth order in th.
void dense_weights(double th, double b[7]) {
  const double t2 = th * th;
  b[0] = -1.0530884977290216 * th * (th - 1.3299890189751412) * (t2 - 1.4364028541716351 * th + 0.7139816917074209);
  b[1] = 0.1017 * t2 * (t2 - 2.1966568338249754 * th + 1.2949852507374631);
  b[2] = 2.490627285651252793 * t2 * (t2 - 2.38535645472061657 * th + 1.57803468208092486);
  b[3] = -16.54810288924490272 * (th - 1.21712927295533244) * (th - 0.61620406037800089) * t2;
  b[4] = 47.37952196281928122 * (th - 1.203071208372362603) * (th - 0.658047292653547382) * t2;
  b[5] = -34.87065786149660974 * (th - 1.2) * (th - 0.666666666666666667) * t2;
  b[6] = 2.5 * (th - 1.0) * (th - 0.6) * t2;
}

// PI controller exponents (Hairer, Norsett & Wanner).
constexpr double kAlpha = 0.17;
constexpr double kBeta = 0.04;
constexpr double kMinFactor = 0.2;
constexpr double kMaxFactor = 10.0;

bool all_finite(const Vec& v) { return v.allFinite(); }

}  // namespace

void StepControl::validate() const {
  if (!(rtol > 0.0) || !(atol > 0.0)) throw ArgumentError("rtol and atol must be positive");
  if (!(dt_init > 0.0)) throw ArgumentError("dt_init must be positive");
  if (dt_init > dt_max) throw ArgumentError("dt_init must not exceed dt_max");
  if (!(safety > 0.0 && safety < 1.0)) throw ArgumentError("safety must lie in (0, 1)");
}

Vec rk4_step(const FieldFn& field, const Vec& u, double dt, double t) {
  if (!(dt > 0.0)) throw ArgumentError("rk4_step needs dt > 0");
  const Eigen::Index d = u.size();
  Vec k1(d), k2(d), k3(d), k4(d);
  auto check = [t](const Vec& k, const char* stage) {
    if (!k.allFinite()) {
      throw IntegrationError(std::string("non-finite RK4 stage ") + stage, t);
    }
  };
  field(u, k1);
  check(k1, "k1");
  field(u + (0.5 * dt) * k1, k2);
  check(k2, "k2");
  field(u + (0.5 * dt) * k2, k3);
  check(k3, "k3");
  field(u + dt * k3, k4);
  check(k4, "k4");
  Vec acc = k1 + 2.0 * k2;
  acc += 2.0 * k3;
  acc += k4;
  return u + (dt / 6.0) * acc;
}

AdaptiveIntegrator::AdaptiveIntegrator(FieldFn field, StepControl ctrl)
    : field_(std::move(field)), ctrl_(ctrl) {
  ctrl_.validate();
  h_ = ctrl_.dt_init;
}

void AdaptiveIntegrator::reset(const Vec& u, double t) {
  u_ = u;
  t_ = t;
  if (!all_finite(u_)) throw DivergenceError("non-finite initial state", t, u_);
  k1_.resize(u_.size());
  field_(u_, k1_);
  err_prev_ = 1e-4;
  next_save_ = 0;
}

void AdaptiveIntegrator::advance(double t_end, std::span<const double> save_at,
                                 const std::function<void(std::size_t, const Vec&)>& on_save,
                                 double span_scale) {
  const Eigen::Index n = u_.size();
  Vec k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), tmp(n), u_new(n), err(n), interp(n);
  const double h_floor = 1e-14 * span_scale;

  while (next_save_ < save_at.size() && save_at[next_save_] <= t_) {
    if (save_at[next_save_] == t_) on_save(next_save_, u_);
    ++next_save_;
  }

  bool last_failure_nonfinite = false;
  while (t_ < t_end) {
    double h = std::min(h_, ctrl_.dt_max);
    bool clamped = false;
    if (t_ + h >= t_end) {
      h = t_end - t_;
      clamped = true;
    }

    tmp = u_ + h * a21 * k1_;
    field_(tmp, k2);
    tmp = u_ + h * (a31 * k1_ + a32 * k2);
    field_(tmp, k3);
    tmp = u_ + h * (a41 * k1_ + a42 * k2 + a43 * k3);
    field_(tmp, k4);
    tmp = u_ + h * (a51 * k1_ + a52 * k2 + a53 * k3 + a54 * k4);
    field_(tmp, k5);
    tmp = u_ + h * (a61 * k1_ + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5);
    field_(tmp, k6);
    u_new = u_ + h * (a71 * k1_ + a72 * k2 + a73 * k3 + a74 * k4 + a75 * k5 + a76 * k6);
    field_(u_new, k7);
    err = h * (e1 * k1_ + e2 * k2 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);

    double err_norm = 0.0;
    bool finite = u_new.allFinite() && k7.allFinite();
    if (finite) {
      for (Eigen::Index i = 0; i < n; ++i) {
        const double sc = ctrl_.atol + ctrl_.rtol * std::max(std::abs(u_(i)), std::abs(u_new(i)));
        err_norm = std::max(err_norm, std::abs(err(i)) / sc);
      }
      finite = std::isfinite(err_norm);
    }

    if (finite && err_norm <= 1.0) {
      const double t_new = clamped ? t_end : t_ + h;
      // Dense output on (t_, t_new].
      while (next_save_ < save_at.size() && save_at[next_save_] <= t_new) {
        const double ts = save_at[next_save_];
        if (ts == t_new) {
          on_save(next_save_, u_new);
        } else {
          double b[7];
          dense_weights((ts - t_) / h, b);
          interp = u_ + h * (b[0] * k1_ + b[1] * k2 + b[2] * k3 + b[3] * k4 + b[4] * k5 + b[5] * k6 + b[6] * k7);
          on_save(next_save_, interp);
        }
        ++next_save_;
      }
      t_ = t_new;
      u_.swap(u_new);
      k1_.swap(k7);
      ++accepted_;
      double factor = kMaxFactor;
      if (err_norm > 0.0) {
        factor = ctrl_.safety * std::pow(err_norm, -kAlpha) * std::pow(err_prev_, kBeta);
        factor = std::clamp(factor, kMinFactor, kMaxFactor);
      }
      err_prev_ = std::max(err_norm, 1e-4);
      // A clamped final step says nothing about the natural step size.
      if (!clamped || h * factor > h_) h_ = std::min(h * factor, ctrl_.dt_max);
      last_failure_nonfinite = false;
    } else {
      ++rejected_;
      last_failure_nonfinite = !finite;
      const double factor =
          finite ? std::max(kMinFactor, ctrl_.safety * std::pow(err_norm, -kAlpha)) : kMinFactor;
      h_ = h * factor;
      if (h_ < h_floor) {
        if (last_failure_nonfinite) {
          throw DivergenceError("state became non-finite near t=" + std::to_string(t_), t_, u_);
        }
        throw StiffnessError("step size underflow at t=" + std::to_string(t_), t_);
      }
    }
  }
}

Trajectory integrate_adaptive(const FieldFn& field, const Vec& u0, double t0, double t1,
                              const StepControl& ctrl, std::span<const double> save_at) {
  if (!(t1 > t0)) throw ArgumentError("integrate_adaptive needs t1 > t0");
  for (std::size_t i = 0; i < save_at.size(); ++i) {
    if (save_at[i] < t0 || save_at[i] > t1) throw ArgumentError("save time outside [t0, t1]");
    if (i > 0 && save_at[i] < save_at[i - 1]) throw ArgumentError("save times must be ascending");
  }
  Trajectory out;
  out.times.assign(save_at.begin(), save_at.end());
  out.states.resize(static_cast<Eigen::Index>(save_at.size()), u0.size());

  AdaptiveIntegrator integ(field, ctrl);
  integ.reset(u0, t0);
  integ.advance(
      t1, save_at,
      [&](std::size_t i, const Vec& u) { out.states.row(static_cast<Eigen::Index>(i)) = u.transpose(); },
      t1 - t0);
  out.accepted_steps = integ.accepted();
  out.rejected_steps = integ.rejected();
  return out;
}

Vec modified_gram_schmidt(Mat& m) {
  const Eigen::Index k = m.cols();
  Vec norms(k);
  for (Eigen::Index j = 0; j < k; ++j) {
    const double before = m.col(j).norm();
    for (Eigen::Index i = 0; i < j; ++i) {
      const double r = m.col(i).dot(m.col(j));
      m.col(j) -= r * m.col(i);
    }
    const double r = m.col(j).norm();
    if (!(r > 64.0 * std::numeric_limits<double>::epsilon() * before) || !std::isfinite(r)) {
      throw NumericalError("degenerate frame in Gram-Schmidt (column " + std::to_string(j) + ")");
    }
    m.col(j) /= r;
    norms(j) = r;
  }
  return norms;
}

LyapunovResult lyapunov_spectrum(const FieldFn& field, const JacobianFn& jacobian, const Vec& u0,
                                 double horizon, double reorth_dt, const StepControl& ctrl) {
  if (!(reorth_dt > 0.0) || !(horizon >= reorth_dt)) {
    throw ArgumentError("lyapunov_spectrum needs horizon >= reorth_dt > 0");
  }
  const Eigen::Index d = u0.size();
  // Coupled state [u; vec(M)] with M stored column-major.
  FieldFn coupled = [&, d](const Vec& z, Vec& dz) {
    dz.resize(z.size());
    Vec u = z.head(d);
    Vec du(d);
    field(u, du);
    Mat jac(d, d);
    jacobian(u, jac);
    dz.head(d) = du;
    Eigen::Map<const Mat> m(z.data() + d, d, d);
    Eigen::Map<Mat> dm(dz.data() + d, d, d);
    dm.noalias() = jac * m;
  };

  Vec z(d + d * d);
  z.head(d) = u0;
  Eigen::Map<Mat>(z.data() + d, d, d).setIdentity();

  AdaptiveIntegrator integ(coupled, ctrl);
  integ.reset(z, 0.0);
  Vec log_growth = Vec::Zero(d);
  const auto intervals = static_cast<long>(std::ceil(horizon / reorth_dt - 1e-9));
  for (long k = 1; k <= intervals; ++k) {
    const double t_next = std::min(horizon, static_cast<double>(k) * reorth_dt);
    integ.advance(t_next, {}, [](std::size_t, const Vec&) {}, horizon);
    z = integ.state();
    Mat m = Eigen::Map<const Mat>(z.data() + d, d, d);
    const Vec r = modified_gram_schmidt(m);
    log_growth += r.array().log().matrix();
    Eigen::Map<Mat>(z.data() + d, d, d) = m;
    integ.reset(z, t_next);
  }

  LyapunovResult res;
  res.exponents = log_growth / horizon;
  std::sort(res.exponents.data(), res.exponents.data() + d, std::greater<>());
  res.horizon = horizon;
  res.reorth_interval = reorth_dt;
  return res;
}

}  // namespace nbode
