#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "nbode/types.hpp"

namespace nbode {

using FieldFn = std::function<void(const Vec& u, Vec& du)>;
using JacobianFn = std::function<void(const Vec& u, Mat& jac)>;

struct StepControl {
  double rtol = 1e-8;
  double atol = 1e-10;
  double dt_init = 1e-3;
  double dt_max = std::numeric_limits<double>::infinity();
  double safety = 0.9;

  void validate() const;

  // Tolerances used for data generation and evaluation.
  static StepControl data_generation() { return {1e-8, 1e-10, 1e-3}; }
  // Tolerances of the adaptive time-step map used in the original training setup.
  static StepControl training_map() { return {1e-4, 1e-6, 1e-3}; }
};

// Classical fourth-order Runge-Kutta step. `t` is only used for error reporting.
Vec rk4_step(const FieldFn& field, const Vec& u, double dt, double t = 0.0);

struct Trajectory {
  std::vector<double> times;
  RowMat states;  // one saved state per row
  std::size_t accepted_steps = 0;
  std::size_t rejected_steps = 0;
};

/// Embedded Tsitouras 5(4) integrator with PI step-size control.
///
/// The state is advanced with the fifth-order solution; the embedded
/// fourth-order solution supplies the local error estimate, which must satisfy
/// |err_i| <= atol + rtol * max(|u_i|, |u_new_i|) for every component.
/// Intermediate output uses the pair's fourth-order continuous extension.
class AdaptiveIntegrator {
 public:
  AdaptiveIntegrator(FieldFn field, StepControl ctrl);

  void reset(const Vec& u, double t);
  // Advance to `t_end`, invoking `on_save(t, u)` for every requested time in (t, t_end]
  // plus the entry time if it equals one of them. `save_at` must be ascending.
  void advance(double t_end, std::span<const double> save_at,
               const std::function<void(std::size_t index, const Vec& u)>& on_save,
               double span_scale);

  const Vec& state() const { return u_; }
  double time() const { return t_; }
  std::size_t accepted() const { return accepted_; }
  std::size_t rejected() const { return rejected_; }

 private:
  FieldFn field_;
  StepControl ctrl_;
  Vec u_, k1_;
  double t_ = 0.0;
  double h_ = 0.0;
  double err_prev_ = 1e-4;
  std::size_t accepted_ = 0;
  std::size_t rejected_ = 0;
  std::size_t next_save_ = 0;
};

// Integrate from t0 to t1 and return the states at `save_at` (ascending, inside [t0, t1]).
// Throws StiffnessError when the step size underflows 1e-14 * (t1 - t0) and
// DivergenceError when the state becomes non-finite.
Trajectory integrate_adaptive(const FieldFn& field, const Vec& u0, double t0, double t1,
                              const StepControl& ctrl, std::span<const double> save_at);

struct LyapunovResult {
  Vec exponents;  // descending, 1/time
  double horizon = 0.0;
  double reorth_interval = 0.0;
};

// Lyapunov spectrum from the variational equation dM/dt = J(u) M, M(0) = I, with
// modified Gram-Schmidt reorthonormalization every `reorth_dt`.
LyapunovResult lyapunov_spectrum(const FieldFn& field, const JacobianFn& jacobian, const Vec& u0,
                                 double horizon, double reorth_dt, const StepControl& ctrl);

// Modified Gram-Schmidt on the columns of `m` (in place, m becomes Q). Returns |diag(R)|.
// Throws NumericalError for a rank-deficient frame.
Vec modified_gram_schmidt(Mat& m);

}  // namespace nbode
