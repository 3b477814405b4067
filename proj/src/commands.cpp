#include "nbode/commands.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <sstream>

#include <json.hpp>

#include "nbode/binary_io.hpp"
#include "nbode/parallel.hpp"

namespace nbode::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

constexpr Split kSplits[] = {Split::Train, Split::Val, Split::Test};

TrajectoryDataset require_dataset(const ExperimentConfig& cfg, Split s) {
  const fs::path dir = cfg.split_dir(s);
  if (!fs::exists(dir / "meta.json")) {
    throw UsageError("missing " + std::string(split_name(s)) + " dataset at " + dir.string() + " (run generate first)");
  }
  return load_dataset(dir);
}

void require_clean(const TrajectoryDataset& ds) {
  if (!ds.clean) {
    throw UsageError("the " + std::string(split_name(ds.split)) + " dataset has no clean states; evaluation needs them");
  }
}

// Loads the cached cover when it fits the configuration, else builds and caches it.
NeighborCover cover_for(const ExperimentConfig& cfg, const TrajectoryDataset& train_data, std::ostream& log) {
  const fs::path dir = cfg.cover_dir();
  if (fs::exists(dir / "cover.bin")) {
    NeighborCover c = load_cover(dir);
    if (c.horizon == cfg.train.horizon && c.n == train_data.n && c.m == train_data.m) return c;
    log << "cached cover does not match (horizon " << c.horizon << "), rebuilding\n";
  }
  return neighbors(cfg, log);
}

ordered_json json_number(double v) {
  if (std::isfinite(v)) return v;
  return std::isnan(v) ? ordered_json("nan") : ordered_json(v > 0 ? "inf" : "-inf");
}

std::string log_tail(const std::string& text, int lines) {
  std::vector<std::string> all;
  std::istringstream is(text);
  for (std::string line; std::getline(is, line);) all.push_back(line);
  std::string out;
  for (std::size_t i = all.size() > static_cast<std::size_t>(lines) ? all.size() - lines : 0; i < all.size(); ++i) {
    out += all[i] + "\n";
  }
  return out;
}

std::string histogram_csv(const RowMat& truth, const RowMat& model, int bins) {
  std::ostringstream os;
  os << "source,ix,iy,x_center,y_center,count\n";
  if (truth.cols() < 2 || truth.rows() == 0) return os.str();
  const double x0 = truth.col(0).minCoeff(), x1 = truth.col(0).maxCoeff();
  const double y0 = truth.col(1).minCoeff(), y1 = truth.col(1).maxCoeff();
  const double wx = (x1 - x0) / bins, wy = (y1 - y0) / bins;
  auto emit = [&](const char* name, const RowMat& pts) {
    std::vector<long> counts(static_cast<std::size_t>(bins * bins), 0);
    for (Eigen::Index r = 0; r < pts.rows(); ++r) {
      if (!(wx > 0.0) || !(wy > 0.0) || !pts.row(r).allFinite()) continue;
      const auto ix = static_cast<long>(std::floor((pts(r, 0) - x0) / wx));
      const auto iy = static_cast<long>(std::floor((pts(r, 1) - y0) / wy));
      if (ix < 0 || iy < 0 || ix > bins || iy > bins) continue;
      counts[std::min<long>(ix, bins - 1) * bins + std::min<long>(iy, bins - 1)]++;
    }
    for (int ix = 0; ix < bins; ++ix) {
      for (int iy = 0; iy < bins; ++iy) {
        os << name << ',' << ix << ',' << iy << ',' << format_double(x0 + (ix + 0.5) * wx) << ','
           << format_double(y0 + (iy + 0.5) * wy) << ',' << counts[ix * bins + iy] << '\n';
      }
    }
  };
  emit("truth", truth);
  emit("model", model);
  return os.str();
}

RowMat initial_states(const TrajectoryDataset& ds, int count) {
  const RowMat& clean = ds.clean_states();
  const int n = std::min(count, ds.n);
  RowMat out(n, ds.d);
  for (int i = 0; i < n; ++i) out.row(i) = clean.row(ds.row(i, 0));
  return out;
}

std::string lyapunov_csv(const LyapunovComparison& c) {
  std::ostringstream os;
  os << "index,model,truth\n";
  for (Eigen::Index r = 0; r < c.model_mean.size(); ++r) {
    os << r + 1 << ',' << format_double(c.model_mean(r)) << ',' << format_double(c.truth_mean(r)) << '\n';
  }
  return os.str();
}

}  // namespace

void generate(const ExperimentConfig& cfg, bool force, std::ostream& log) {
  cfg.validate();
  for (Split s : kSplits) {
    if (fs::exists(cfg.split_dir(s))) {
      if (!force) throw UsageError(cfg.split_dir(s).string() + " already exists (pass --force to overwrite)");
      fs::remove_all(cfg.split_dir(s));
    }
  }
  const SystemSpec spec = cfg.system_spec();
  const TrajectoryDataset train_data =
      generate_dataset(spec, Split::Train, cfg.noise_std, cfg.data_seed, nullptr, cfg.generation);
  save_dataset(train_data, cfg.split_dir(Split::Train));
  log << "train: " << train_data.n << " x " << train_data.m << " states, tau " << format_double(train_data.tau)
      << ", dt " << format_double(train_data.dt) << "\n";
  const TrainContext ctx = train_context(train_data);
  for (Split s : {Split::Val, Split::Test}) {
    const TrajectoryDataset ds = generate_dataset(spec, s, cfg.noise_std, cfg.data_seed, &ctx, cfg.generation);
    save_dataset(ds, cfg.split_dir(s));
    log << split_name(s) << ": " << ds.n << " x " << ds.m << " states\n";
  }
}

NeighborCover neighbors(const ExperimentConfig& cfg, std::ostream& log) {
  cfg.validate();
  const TrajectoryDataset train_data = require_dataset(cfg, Split::Train);
  const Radii radii = calibrate_radii(train_data.states, train_data.noise_std, cfg.cover);
  NeighborCover cover = build_cover(train_data, radii, cfg.train.horizon);
  save_cover(cover, cfg.cover_dir());
  const OccupancyStats st = cover.stats();
  log << "radii: r_min " << format_double(radii.r_min) << ", r_max " << format_double(radii.r_max) << "\n"
      << "centers " << st.centers << ", occupancy mean " << format_double(st.mean) << " (fraction "
      << format_double(st.mean / static_cast<double>(st.total_points)) << "), min " << st.min << ", max " << st.max
      << ", empty " << st.empty_centers << "\n";
  return cover;
}

TrainResult train(const ExperimentConfig& cfg, bool force, std::ostream& log) {
  cfg.validate();
  const fs::path run = cfg.run_dir();
  if (fs::exists(run / "model.json") && !force) {
    throw UsageError(run.string() + " already holds a trained model (pass --force to overwrite)");
  }
  const TrajectoryDataset train_data = require_dataset(cfg, Split::Train);
  const TrajectoryDataset val_data = require_dataset(cfg, Split::Val);
  std::optional<NeighborCover> cover;
  if (cfg.train.uses_neighbors()) cover = cover_for(cfg, train_data, log);

  fs::create_directories(run);
  save_config(cfg, run / "config.resolved.json");
  std::vector<TrainLogRow> rows;
  const long report_every = std::max<long>(1, cfg.train.val_every);
  auto progress = [&](const TrainLogRow& row) {
    rows.push_back(row);
    if (row.has_val && (row.step % report_every == 0 || row.step == cfg.train.steps)) {
      log << "step " << row.step << " val " << format_double(row.val_loss) << "\n";
    }
  };
  try {
    TrainResult res = nbode::train(train_data, val_data, cover ? &*cover : nullptr, cfg.train, progress);
    save_model(res.best, run, res.best_info);
    io::write_text(run / "train_log.csv", format_train_log(res.log, cfg.train));
    log << "best val " << format_double(res.best_info.val_loss) << " at step " << res.best_info.step << ", "
        << res.skipped_steps << " skipped steps\n";
    return res;
  } catch (const TrainingAbort&) {
    const std::string text = format_train_log(rows, cfg.train);
    io::write_text(run / "train_log.csv", text);
    log << "training aborted; last log rows:\n" << log_tail(text, 5);
    throw;
  }
}

EvalReport eval(const ExperimentConfig& cfg, std::ostream& log) {
  cfg.validate();
  const fs::path run = cfg.run_dir();
  if (!fs::exists(run / "model.json")) throw UsageError("no trained model in " + run.string());
  const TrajectoryDataset test = require_dataset(cfg, Split::Test);
  const TrajectoryDataset val = require_dataset(cfg, Split::Val);
  require_clean(test);
  require_clean(val);
  CheckpointInfo info;
  const MlpVectorField model = load_model(run, &info);
  if (model.dim() != test.d) throw UsageError("model dimension does not match the dataset");
  const SystemSpec& spec = test.system;
  const Surrogate f = model_surrogate(model);
  const Surrogate truth = truth_surrogate(spec, test.transform);

  EvalReport rep;
  rep.lambda1 = cfg.eval.lambda1 ? *cfg.eval.lambda1 : estimate_lambda1(spec, cfg.eval);
  log << "lambda1 " << format_double(rep.lambda1) << "\n";
  rep.vpt = nrmse_vpt(f, test.clean_states(), test.n, test.m, test.dt, rep.lambda1, cfg.eval.vpt_threshold,
                      cfg.eval.n_sub);
  log << "VPT " << format_double(rep.vpt.vpt_mean) << "\n";
  rep.rel = relative_errors(f, truth, test.clean_states());
  log << "median relative Jacobian error " << format_double(median(rep.rel.jac)) << "\n";
  rep.mmd = attractor_mmd_curve(f, spec, test.transform, test.dt, rep.lambda1, cfg.eval);
  log << "MMD2 plateau " << format_double(rep.mmd->plateau) << " (baseline " << format_double(rep.mmd->baseline)
      << ")\n";
  rep.sinkhorn = sinkhorn_score(f, val, cfg.eval.sinkhorn_pieces, cfg.eval.n_sub, cfg.eval.sinkhorn);
  log << "Sinkhorn score " << format_double(rep.sinkhorn->value) << "\n";
  if (cfg.eval.lyapunov_ics > 0) {
    rep.lyapunov = lyapunov_mae(f, truth, initial_states(test, cfg.eval.lyapunov_ics), cfg.eval.lyapunov_horizon,
                                cfg.eval.reorth_dt, cfg.eval.ctrl);
    log << "Lyapunov MAE " << format_double(rep.lyapunov->mae) << "\n";
  }

  std::vector<double> sq;
  for (double v : rep.vpt.vpt) sq.push_back((v - rep.vpt.vpt_mean) * (v - rep.vpt.vpt_mean));
  double var = 0.0;
  for (double v : sq) var += v;
  var /= static_cast<double>(sq.size());

  ordered_json j;
  j["system"] = std::string(system_name(spec.kind));
  const Method method =
      fs::exists(run / "config.resolved.json") ? load_config(run / "config.resolved.json").train.method : cfg.train.method;
  j["method"] = method_name(method);
  j["checkpoint_step"] = info.step;
  j["checkpoint_val_loss"] = json_number(info.val_loss);
  j["lambda1"] = rep.lambda1;
  j["vpt_mean"] = json_number(rep.vpt.vpt_mean);
  j["vpt_std"] = json_number(std::sqrt(var));
  j["vpt_diverged"] = rep.vpt.diverged;
  j["mmd2_plateau"] = json_number(rep.mmd->plateau);
  j["mmd2_final"] = json_number(rep.mmd->diverged ? INFINITY : rep.mmd->mmd2.back());
  j["baseline_mmd2"] = json_number(rep.mmd->baseline);
  j["mmd_diverged"] = rep.mmd->diverged;
  j["rel_vf_median"] = json_number(rep.rel.vf.empty() ? NAN : median(rep.rel.vf));
  j["rel_jac_median"] = json_number(rep.rel.jac.empty() ? NAN : median(rep.rel.jac));
  j["rel_skipped"] = rep.rel.skipped;
  j["sinkhorn_score"] = json_number(rep.sinkhorn->value);
  j["sinkhorn_converged"] = rep.sinkhorn->converged;
  if (rep.lyapunov) {
    j["lyapunov_mae"] = json_number(rep.lyapunov->mae);
  } else {
    j["lyapunov_mae"] = nullptr;
  }
  io::write_text(run / "report.json", j.dump(2) + "\n");

  std::ostringstream nrmse;
  nrmse << "step,time,lyapunov_time,mean_nrmse\n";
  for (std::size_t s = 0; s < rep.vpt.mean_nrmse.size(); ++s) {
    const double t = static_cast<double>(s + 1) * test.dt;
    nrmse << s + 1 << ',' << format_double(t) << ',' << format_double(t * rep.lambda1) << ','
          << format_double(rep.vpt.mean_nrmse[s]) << '\n';
  }
  io::write_text(run / "nrmse.csv", nrmse.str());

  std::ostringstream mmd;
  mmd << "lyapunov_time,mmd2,baseline_mmd2\n";
  for (std::size_t k = 0; k < rep.mmd->lyapunov_time.size(); ++k) {
    mmd << format_double(rep.mmd->lyapunov_time[k]) << ','
        << (k < rep.mmd->mmd2.size() ? format_double(rep.mmd->mmd2[k]) : std::string()) << ','
        << format_double(rep.mmd->baseline_curve[k]) << '\n';
  }
  io::write_text(run / "mmd_curve.csv", mmd.str());

  std::ostringstream rel;
  rel << "point,trajectory,time_index,vf_error,jac_error\n";
  for (std::size_t i = 0; i < rep.rel.points.size(); ++i) {
    const std::size_t p = rep.rel.points[i];
    rel << p << ',' << p / static_cast<std::size_t>(test.m) << ',' << p % static_cast<std::size_t>(test.m) << ','
        << format_double(rep.rel.vf[i]) << ',' << format_double(rep.rel.jac[i]) << '\n';
  }
  io::write_text(run / "rel_errors.csv", rel.str());
  io::write_text(run / "hist2d.csv", histogram_csv(rep.mmd->truth_final, rep.mmd->model_final, 40));
  if (rep.lyapunov) io::write_text(run / "lyapunov.csv", lyapunov_csv(*rep.lyapunov));
  return rep;
}

void lyapunov(const ExperimentConfig& cfg, bool with_model, std::ostream& log) {
  cfg.validate();
  if (with_model) {
    const fs::path run = cfg.run_dir();
    if (!fs::exists(run / "model.json")) throw UsageError("no trained model in " + run.string());
    const TrajectoryDataset test = require_dataset(cfg, Split::Test);
    require_clean(test);
    const MlpVectorField model = load_model(run);
    const int ics = std::max(1, cfg.eval.lyapunov_ics);
    const LyapunovComparison c =
        lyapunov_mae(model_surrogate(model), truth_surrogate(test.system, test.transform), initial_states(test, ics),
                     cfg.eval.lyapunov_horizon, cfg.eval.reorth_dt, cfg.eval.ctrl);
    io::write_text(run / "lyapunov.csv", lyapunov_csv(c));
    log << "model " << c.model_mean.transpose() << "\ntruth " << c.truth_mean.transpose() << "\nMAE "
        << format_double(c.mae) << "\n";
    return;
  }
  const SystemSpec spec = cfg.system_spec();
  const RowMat starts = sample_on_attractor(spec, cfg.eval.lambda1_ics, derive_seed(cfg.eval.seed, 7), cfg.eval.ctrl);
  const Surrogate truth = truth_surrogate(spec, AffineTransform::identity(spec.dim));
  const Vec mean = mean_lyapunov_spectrum(truth, starts, cfg.eval.lyapunov_horizon, cfg.eval.reorth_dt, cfg.eval.ctrl);
  log << "spectrum";
  for (Eigen::Index r = 0; r < mean.size(); ++r) log << ' ' << format_double(mean(r));
  log << "\nsum " << format_double(mean.sum()) << "\n";
}

SweepResult sweep(const ExperimentConfig& cfg, bool force, std::ostream& log) {
  cfg.validate();
  const fs::path run = cfg.run_dir();
  if (fs::exists(run / "sweep.csv") && !force) {
    throw UsageError(run.string() + " already holds a sweep (pass --force to overwrite)");
  }
  const TrajectoryDataset train_data = require_dataset(cfg, Split::Train);
  const TrajectoryDataset val_data = require_dataset(cfg, Split::Val);
  require_clean(val_data);
  const NeighborCover cover = cover_for(cfg, train_data, log);
  fs::create_directories(run);
  save_config(cfg, run / "config.resolved.json");
  const SweepResult res =
      hyperparam_sweep(train_data, val_data, cover, cfg.train, cfg.sweep_k, cfg.sweep_lambda, cfg.eval,
                       [&](const SweepCell& c) {
                         log << "K " << c.k << " lambda " << format_double(c.lambda) << ": "
                             << (c.failed ? "failed (" + c.error + ")" : format_double(c.score.value)) << "\n";
                       });
  io::write_text(run / "sweep.csv", format_sweep_csv(res));
  if (res.selected >= 0) {
    const SweepCell& c = res.cells[res.selected];
    log << "selected K " << c.k << " lambda " << format_double(c.lambda) << "\n";
  } else {
    log << "every sweep cell failed\n";
  }
  return res;
}

int guarded(const std::function<void()>& fn, std::ostream& err) {
  try {
    fn();
    return 0;
  } catch (const ArgumentError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const SequencingError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace nbode::cli
