#include "nbode/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "nbode/errors.hpp"
#include "nbode/parallel.hpp"

namespace nbode {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

FieldFn single_field(const Surrogate& f) {
  return [&f](const Vec& u, Vec& du) {
    RowMat in = u.transpose();
    RowMat out;
    f.field_batch(in, out);
    du = out.row(0).transpose();
  };
}

JacobianFn single_jacobian(const Surrogate& f) {
  return [&f](const Vec& u, Mat& jac) { jac = f.jacobian(u); };
}

}  // namespace

Surrogate model_surrogate(const MlpVectorField& m) {
  Surrogate s;
  s.dim = m.dim();
  s.field_batch = [m](const RowMat& u, RowMat& du) { du = model_field_batch(m, u); };
  s.jacobian = [m](const Vec& u) { return model_jacobian(m, u); };
  return s;
}

Surrogate truth_surrogate(const SystemSpec& spec, const AffineTransform& t) {
  t.validate();
  if (t.dim() != spec.dim) throw ArgumentError("transform dimension does not match the system");
  Surrogate s;
  s.dim = spec.dim;
  s.field_batch = [spec, t](const RowMat& u, RowMat& du) { transform_field_batch(spec, t, u, du); };
  s.jacobian = [spec, t](const Vec& u) { return transform_jacobian(spec, t, u); };
  return s;
}

void EvalConfig::validate() const {
  if (!(vpt_threshold > 0.0)) throw ArgumentError("vpt_threshold must be positive");
  if (lambda1 && !(*lambda1 > 0.0)) throw ArgumentError("lambda1 must be positive");
  if (attractor_samples < 2) throw ArgumentError("attractor_samples must be at least 2");
  if (!(lyapunov_times > 0.0)) throw ArgumentError("lyapunov_times must be positive");
  if (mmd_grid < 2) throw ArgumentError("mmd_grid must be at least 2");
  kernel.validate();
  if (sinkhorn_pieces < 1) throw ArgumentError("sinkhorn_pieces must be positive");
  if (n_sub < 1) throw ArgumentError("n_sub must be positive");
  if (lyapunov_ics < 0 || lambda1_ics < 1) throw ArgumentError("Lyapunov initial condition counts out of range");
  if (!(reorth_dt > 0.0) || !(lyapunov_horizon >= reorth_dt)) {
    throw ArgumentError("lyapunov_horizon must be at least reorth_dt > 0");
  }
  ctrl.validate();
}

void rollout_batch(const Surrogate& f, const RowMat& u0, double dt, int steps, int n_sub,
                   const std::function<void(int, const RowMat&)>& on_step) {
  if (!(dt > 0.0) || n_sub < 1 || steps < 0) throw ArgumentError("rollout_batch needs dt > 0, n_sub >= 1");
  if (u0.cols() != f.dim) throw ArgumentError("rollout_batch: state dimension mismatch");
  const double h = dt / n_sub;
  RowMat u = u0, k1, k2, k3, k4, tmp;
  for (int s = 1; s <= steps; ++s) {
    for (int k = 0; k < n_sub; ++k) {
      f.field_batch(u, k1);
      tmp = u + (0.5 * h) * k1;
      f.field_batch(tmp, k2);
      tmp = u + (0.5 * h) * k2;
      f.field_batch(tmp, k3);
      tmp = u + h * k3;
      f.field_batch(tmp, k4);
      u += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    on_step(s, u);
  }
}

double vpt_from_curve(std::span<const double> curve, double dt, double lambda1, double eps) {
  for (std::size_t k = 0; k < curve.size(); ++k) {
    if (!(curve[k] <= eps)) return lambda1 * static_cast<double>(k) * dt;
  }
  return lambda1 * static_cast<double>(curve.size()) * dt;
}

VptResult nrmse_vpt(const Surrogate& model, const RowMat& clean, int n, int m, double dt, double lambda1,
                    double eps, int n_sub) {
  if (n < 1 || m < 2) throw ArgumentError("nrmse_vpt needs n >= 1 and m >= 2");
  if (clean.rows() != static_cast<Eigen::Index>(n) * m) throw ArgumentError("nrmse_vpt: block has wrong row count");
  if (!(lambda1 > 0.0) || !(eps > 0.0)) throw ArgumentError("nrmse_vpt needs lambda1 > 0 and eps > 0");
  const Eigen::Index d = clean.cols();
  const double norm = 1.0 / std::sqrt(static_cast<double>(d));
  RowMat u0(n, d);
  for (int i = 0; i < n; ++i) u0.row(i) = clean.row(static_cast<Eigen::Index>(i) * m);

  VptResult res;
  res.nrmse.assign(n, std::vector<double>(m - 1, kInf));
  std::vector<bool> alive(n, true);
  rollout_batch(model, u0, dt, m - 1, n_sub, [&](int s, const RowMat& u) {
    for (int i = 0; i < n; ++i) {
      if (!alive[i]) continue;
      const double e = (u.row(i) - clean.row(static_cast<Eigen::Index>(i) * m + s)).norm() * norm;
      if (std::isfinite(e)) {
        res.nrmse[i][s - 1] = e;
      } else {
        alive[i] = false;
      }
    }
  });
  res.mean_nrmse.assign(m - 1, 0.0);
  for (int i = 0; i < n; ++i) {
    for (int s = 0; s < m - 1; ++s) res.mean_nrmse[s] += res.nrmse[i][s] / n;
    res.vpt.push_back(vpt_from_curve(res.nrmse[i], dt, lambda1, eps));
    if (!alive[i]) ++res.diverged;
  }
  double total = 0.0;
  for (double v : res.vpt) total += v;
  res.vpt_mean = total / n;
  return res;
}

double estimate_lambda1(const SystemSpec& spec, const EvalConfig& cfg) {
  const RowMat starts = sample_on_attractor(spec, cfg.lambda1_ics, derive_seed(cfg.seed, 7), cfg.ctrl);
  FieldFn field = [&spec](const Vec& u, Vec& du) { du = eval_vector_field(spec, u); };
  JacobianFn jac = [&spec](const Vec& u, Mat& j) { j = eval_jacobian(spec, u); };
  std::vector<double> top(starts.rows());
  parallel_for(top.size(), [&](std::size_t i) {
    const Vec u0 = starts.row(static_cast<Eigen::Index>(i)).transpose();
    top[i] = lyapunov_spectrum(field, jac, u0, cfg.lyapunov_horizon, cfg.reorth_dt, cfg.ctrl).exponents(0);
  });
  double sum = 0.0;
  for (double v : top) sum += v;
  const double l1 = sum / static_cast<double>(top.size());
  if (!(l1 > 0.0)) throw EstimationError("largest Lyapunov exponent is not positive");
  return l1;
}

double mmd2_paired(const RowMat& x, const RowMat& y, const KernelConfig& cfg) {
  if (x.rows() != y.rows() || x.cols() != y.cols()) throw ArgumentError("mmd2_paired needs equally shaped samples");
  const Eigen::Index n = x.rows(), d = x.cols();
  if (n < 2) throw ArgumentError("mmd2_paired needs at least 2 samples");
  std::vector<double> rows(static_cast<std::size_t>(n), 0.0);
  auto dist2 = [d](const double* a, const double* b) {
    double s = 0.0;
    for (Eigen::Index c = 0; c < d; ++c) {
      const double t = a[c] - b[c];
      s += t * t;
    }
    return s;
  };
  parallel_for(rows.size(), [&](std::size_t ii) {
    const auto i = static_cast<Eigen::Index>(ii);
    const double* xi = x.data() + i * d;
    const double* yi = y.data() + i * d;
    double acc = 0.0;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double* xj = x.data() + j * d;
      const double* yj = y.data() + j * d;
      const double kxx = rq_kernel_sq(dist2(xi, xj), cfg);
      const double kyy = rq_kernel_sq(dist2(yi, yj), cfg);
      const double kxy = rq_kernel_sq(dist2(xi, yj), cfg);
      const double kyx = rq_kernel_sq(dist2(xj, yi), cfg);
      acc += (kxx + kyy) - kxy - kyx;
    }
    rows[ii] = acc;
  });
  double total = 0.0;
  for (double r : rows) total += r;
  return 2.0 * total / (static_cast<double>(n) * static_cast<double>(n - 1));
}

std::vector<RowMat> evolve_truth_samples(const SystemSpec& spec, const AffineTransform& t, const RowMat& initial,
                                         std::span<const double> times, const StepControl& ctrl) {
  if (times.empty()) throw ArgumentError("evolve_truth_samples needs at least one time");
  const Eigen::Index n = initial.rows(), d = initial.cols();
  std::vector<RowMat> out(times.size(), RowMat(n, d));
  FieldFn field = [&spec](const Vec& u, Vec& du) { du = eval_vector_field(spec, u); };
  parallel_for(static_cast<std::size_t>(n), [&](std::size_t ii) {
    const auto i = static_cast<Eigen::Index>(ii);
    const Vec u0 = initial.row(i).transpose();
    if (times.back() == 0.0) {
      for (auto& o : out) o.row(i) = t.apply(u0).transpose();
      return;
    }
    AdaptiveIntegrator integ(field, ctrl);
    integ.reset(u0, 0.0);
    integ.advance(
        times.back(), times, [&](std::size_t k, const Vec& u) { out[k].row(i) = t.apply(u).transpose(); },
        times.back());
  });
  return out;
}

MmdCurve attractor_mmd_curve(const Surrogate& model, const SystemSpec& spec, const AffineTransform& t, double dt,
                             double lambda1, const EvalConfig& cfg) {
  cfg.validate();
  if (!(lambda1 > 0.0) || !(dt > 0.0)) throw ArgumentError("attractor_mmd_curve needs lambda1 > 0 and dt > 0");
  const int g = cfg.mmd_grid;
  MmdCurve res;
  std::vector<double> times(g);
  for (int k = 0; k < g; ++k) {
    res.lyapunov_time.push_back(cfg.lyapunov_times * k / (g - 1));
    times[k] = res.lyapunov_time.back() / lambda1;
  }
  const RowMat a = sample_on_attractor(spec, cfg.attractor_samples, derive_seed(cfg.seed, 11), cfg.ctrl);
  const RowMat b = sample_on_attractor(spec, cfg.attractor_samples, derive_seed(cfg.seed, 12), cfg.ctrl);
  const std::vector<RowMat> truth_a = evolve_truth_samples(spec, t, a, times, cfg.ctrl);
  const std::vector<RowMat> truth_b = evolve_truth_samples(spec, t, b, times, cfg.ctrl);

  double base_sum = 0.0;
  for (int k = 0; k < g; ++k) {
    res.baseline_curve.push_back(mmd2_paired(truth_a[k], truth_b[k], cfg.kernel));
    base_sum += res.baseline_curve.back();
  }
  res.baseline = base_sum / g;

  RowMat u = truth_a[0];
  res.mmd2.push_back(mmd2_paired(truth_a[0], u, cfg.kernel));
  for (int k = 1; k < g; ++k) {
    const double span = times[k] - times[k - 1];
    const int steps = std::max(1, static_cast<int>(std::ceil(span / dt - 1e-9)));
    rollout_batch(model, u, span / steps, steps, cfg.n_sub, [&](int s, const RowMat& state) {
      if (s == steps) u = state;
    });
    if (!u.allFinite()) {
      res.diverged = true;
      break;
    }
    res.mmd2.push_back(mmd2_paired(truth_a[k], u, cfg.kernel));
  }
  res.truth_final = truth_a.back();
  res.model_final = u;
  if (res.diverged) {
    res.plateau = kInf;
  } else {
    double sum = 0.0;
    int count = 0;
    for (int k = 0; k < g; ++k) {
      if (res.lyapunov_time[k] >= cfg.plateau_from - 1e-9) {
        sum += res.mmd2[k];
        ++count;
      }
    }
    res.plateau = count > 0 ? sum / count : res.mmd2.back();
  }
  return res;
}

RelativeErrors relative_errors(const Surrogate& model, const Surrogate& truth, const RowMat& points) {
  if (model.dim != truth.dim || points.cols() != model.dim) throw ArgumentError("relative_errors: dimension mismatch");
  const auto n = static_cast<std::size_t>(points.rows());
  RowMat fm, ft;
  model.field_batch(points, fm);
  truth.field_batch(points, ft);
  std::vector<double> vf(n), jac(n);
  std::vector<char> used(n, 0);
  parallel_for(n, [&](std::size_t ii) {
    const auto i = static_cast<Eigen::Index>(ii);
    const double ref = ft.row(i).norm();
    if (ref == 0.0) return;
    used[ii] = 1;
    vf[ii] = (fm.row(i) - ft.row(i)).norm() / ref;
    const Vec u = points.row(i).transpose();
    const Mat jt = truth.jacobian(u);
    jac[ii] = (model.jacobian(u) - jt).norm() / jt.norm();
  });
  RelativeErrors res;
  for (std::size_t i = 0; i < n; ++i) {
    if (!used[i]) {
      ++res.skipped;
      continue;
    }
    res.vf.push_back(vf[i]);
    res.jac.push_back(jac[i]);
    res.points.push_back(i);
  }
  return res;
}

Vec mean_lyapunov_spectrum(const Surrogate& f, const RowMat& initial, double horizon, double reorth_dt,
                           const StepControl& ctrl) {
  if (initial.rows() < 1 || initial.cols() != f.dim) throw ArgumentError("mean_lyapunov_spectrum: bad initial states");
  std::vector<Vec> spectra(static_cast<std::size_t>(initial.rows()));
  const FieldFn field = single_field(f);
  const JacobianFn jac = single_jacobian(f);
  parallel_for(spectra.size(), [&](std::size_t i) {
    const Vec u0 = initial.row(static_cast<Eigen::Index>(i)).transpose();
    spectra[i] = lyapunov_spectrum(field, jac, u0, horizon, reorth_dt, ctrl).exponents;
  });
  Vec mean = Vec::Zero(f.dim);
  for (const Vec& s : spectra) mean += s;
  return mean / static_cast<double>(spectra.size());
}

LyapunovComparison lyapunov_mae(const Surrogate& model, const Surrogate& truth, const RowMat& initial,
                                double horizon, double reorth_dt, const StepControl& ctrl) {
  if (model.dim != truth.dim) throw ArgumentError("lyapunov_mae: dimension mismatch");
  LyapunovComparison res;
  res.model_mean = mean_lyapunov_spectrum(model, initial, horizon, reorth_dt, ctrl);
  res.truth_mean = mean_lyapunov_spectrum(truth, initial, horizon, reorth_dt, ctrl);
  res.mae = (res.model_mean - res.truth_mean).cwiseAbs().mean();
  return res;
}

SinkhornScore sinkhorn_score(const Surrogate& model, const TrajectoryDataset& val, int pieces, int n_sub,
                             const SinkhornOptions& opts) {
  const RowMat& clean = val.clean_states();
  if (pieces < 1) throw ArgumentError("sinkhorn_score needs pieces >= 1");
  const int len = val.m / pieces;
  if (len < 2) throw ArgumentError("trajectories are too short for the requested number of pieces");
  const int count = val.n * pieces;
  RowMat starts(count, val.d), data_end(count, val.d);
  for (int i = 0; i < val.n; ++i) {
    for (int p = 0; p < pieces; ++p) {
      starts.row(i * pieces + p) = clean.row(val.row(i, p * len));
      data_end.row(i * pieces + p) = clean.row(val.row(i, p * len + len - 1));
    }
  }
  RowMat model_end;
  rollout_batch(model, starts, val.dt, len - 1, n_sub, [&](int s, const RowMat& u) {
    if (s == len - 1) model_end = u;
  });
  SinkhornScore res;
  res.segments = count;
  if (!model_end.allFinite()) {
    res.value = kInf;
    res.converged = false;
    return res;
  }
  const SinkhornResult sk = sinkhorn_divergence(data_end, model_end, opts);
  res.value = sk.value;
  res.converged = sk.converged;
  return res;
}

int select_sweep_cell(const std::vector<SweepCell>& cells) {
  int best = -1;
  for (int i = 0; i < static_cast<int>(cells.size()); ++i) {
    const SweepCell& c = cells[i];
    if (c.failed || !std::isfinite(c.score.value)) continue;
    if (best < 0) {
      best = i;
      continue;
    }
    const SweepCell& b = cells[best];
    const bool better = c.score.value < b.score.value ||
                        (c.score.value == b.score.value &&
                         (c.lambda < b.lambda || (c.lambda == b.lambda && c.k < b.k)));
    if (better) best = i;
  }
  return best;
}

SweepResult hyperparam_sweep(const TrajectoryDataset& train_data, const TrajectoryDataset& val_data,
                             const NeighborCover& cover, const TrainConfig& base, const std::vector<int>& ks,
                             const std::vector<double>& lambdas, const EvalConfig& eval,
                             const std::function<void(const SweepCell&)>& progress) {
  if (ks.empty() || lambdas.empty()) throw ArgumentError("the sweep grid is empty");
  val_data.clean_states();
  SweepResult res;
  for (int k : ks) {
    for (double lambda : lambdas) {
      TrainConfig cfg = base;
      cfg.method = Method::Neighborhood;
      cfg.k = k;
      cfg.lambda = lambda;
      cfg.validate();
      SweepCell cell;
      cell.k = k;
      cell.lambda = lambda;
      try {
        const TrainResult tr = train(train_data, val_data, &cover, cfg);
        cell.score = sinkhorn_score(model_surrogate(tr.best), val_data, eval.sinkhorn_pieces, eval.n_sub, eval.sinkhorn);
        cell.model = tr.best;
        if (!std::isfinite(cell.score.value)) {
          cell.failed = true;
          cell.error = "non-finite score";
        }
      } catch (const ArgumentError&) {
        throw;
      } catch (const Error& e) {
        cell.failed = true;
        cell.error = e.what();
      }
      if (progress) progress(cell);
      res.cells.push_back(std::move(cell));
    }
  }
  res.selected = select_sweep_cell(res.cells);
  return res;
}

std::string format_sweep_csv(const SweepResult& r) {
  std::ostringstream os;
  os << "k,lambda,score,status,selected\n";
  for (std::size_t i = 0; i < r.cells.size(); ++i) {
    const SweepCell& c = r.cells[i];
    const char* status = c.failed ? "failed" : (c.score.converged ? "ok" : "unconverged");
    os << c.k << ',' << format_double(c.lambda) << ',' << (c.failed ? std::string() : format_double(c.score.value))
       << ',' << status << ',' << (static_cast<int>(i) == r.selected ? 1 : 0) << '\n';
  }
  return os.str();
}

double median(std::vector<double> v) {
  if (v.empty()) throw ArgumentError("median of an empty set");
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double hi = v[mid];
  if (v.size() % 2 == 1) return hi;
  const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lo + hi);
}

}  // namespace nbode
