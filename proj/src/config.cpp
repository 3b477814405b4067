#include "nbode/config.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <optional>
#include <set>

#include "nbode/binary_io.hpp"
#include "nbode/errors.hpp"

namespace nbode {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

class StrictReader {
 public:
  StrictReader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ArgumentError(where_ + " must be a JSON object");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ArgumentError(where_ + "." + key + " has the wrong type");
    }
  }

  void get(const char* key, std::optional<double>& out) {
    seen_.insert(key);
    if (!j_.contains(key) || j_.at(key).is_null()) return;
    double v = 0.0;
    get(key, v);
    out = v;
  }

  // Calls fn(reader) on a nested object if present.
  template <class Fn>
  void nested(const char* key, Fn&& fn) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    StrictReader sub(j_.at(key), where_ + "." + key);
    fn(sub);
    sub.finish();
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ArgumentError("unknown key " + where_ + "." + it.key());
    }
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

ordered_json ctrl_to_json(const StepControl& c) {
  ordered_json j;
  j["rtol"] = c.rtol;
  j["atol"] = c.atol;
  j["dt_init"] = c.dt_init;
  j["dt_max"] = std::isfinite(c.dt_max) ? ordered_json(c.dt_max) : ordered_json(nullptr);
  j["safety"] = c.safety;
  return j;
}

void ctrl_from(StrictReader& r, StepControl& c) {
  r.get("rtol", c.rtol);
  r.get("atol", c.atol);
  r.get("dt_init", c.dt_init);
  std::optional<double> dt_max;
  r.get("dt_max", dt_max);
  c.dt_max = dt_max.value_or(std::numeric_limits<double>::infinity());
  r.get("safety", c.safety);
}

}  // namespace

void ExperimentConfig::normalize() {
  if (train.method == Method::Vanilla) train.lambda = 0.0;
}

void ExperimentConfig::validate() const {
  if (name.empty() || name.find('/') != std::string::npos) throw ArgumentError("run name must be a plain directory name");
  system_spec();
  if (!(noise_std >= 0.0)) throw ArgumentError("noise_std must be non-negative");
  if (generation.n_traj < 1 || generation.m < 2) throw ArgumentError("generation needs n_traj >= 1 and m >= 2");
  if (!(generation.dt_fraction > 0.0) || !(generation.tau_horizon > 0.0) || generation.fft_length < 16) {
    throw ArgumentError("generation timing options out of range");
  }
  generation.ctrl.validate();
  if (!(cover.target_frac > 0.0 && cover.target_frac < 1.0)) throw ArgumentError("cover.target_frac must lie in (0, 1)");
  if (!(cover.multiplier >= 0.0) || cover.n_centers < 1 || !(cover.rel_tol > 0.0)) {
    throw ArgumentError("cover options out of range");
  }
  train.validate();
  if (train.method == Method::Vanilla && train.lambda != 0.0) throw ArgumentError("vanilla training requires lambda = 0");
  eval.validate();
  if (sweep_k.empty() || sweep_lambda.empty()) throw ArgumentError("sweep grid must not be empty");
  for (int k : sweep_k) {
    if (k < 2) throw ArgumentError("sweep K values must be at least 2");
  }
  for (double l : sweep_lambda) {
    if (!(l > 0.0)) throw ArgumentError("sweep lambda values must be positive");
  }
}

SystemSpec ExperimentConfig::system_spec() const {
  SystemSpec spec = system_from_name(system);
  if (spec.kind == SystemKind::Lorenz96) spec = make_system(SystemKind::Lorenz96, lorenz96_dim);
  return spec;
}

ordered_json config_to_json(const ExperimentConfig& c) {
  ordered_json j;
  j["name"] = c.name;
  j["system"] = c.system;
  j["lorenz96_dim"] = c.lorenz96_dim;
  j["noise_std"] = c.noise_std;
  j["data_seed"] = c.data_seed;
  j["data_dir"] = c.data_dir;
  j["runs_dir"] = c.runs_dir;

  ordered_json g;
  g["n_traj"] = c.generation.n_traj;
  g["m"] = c.generation.m;
  g["dt_fraction"] = c.generation.dt_fraction;
  g["tau_horizon"] = c.generation.tau_horizon;
  g["fft_length"] = c.generation.fft_length;
  g["ctrl"] = ctrl_to_json(c.generation.ctrl);
  j["generation"] = g;

  ordered_json cv;
  cv["target_frac"] = c.cover.target_frac;
  cv["multiplier"] = c.cover.multiplier;
  cv["n_centers"] = c.cover.n_centers;
  cv["rel_tol"] = c.cover.rel_tol;
  cv["seed"] = c.cover.seed;
  j["cover"] = cv;

  const TrainConfig& t = c.train;
  ordered_json tr;
  tr["method"] = method_name(t.method);
  tr["horizon"] = t.horizon;
  tr["batch_size"] = t.batch_size;
  tr["k"] = t.k;
  tr["lambda"] = t.lambda;
  tr["lr"] = t.lr;
  tr["steps"] = t.steps;
  tr["val_every"] = t.val_every;
  tr["seed"] = t.seed;
  tr["n_sub"] = t.n_sub;
  tr["taylor_order"] = t.taylor_order;
  tr["bandwidths"] = t.kernel.bandwidths;
  tr["hidden"] = t.hidden;
  ordered_json opt;
  opt["beta1"] = t.optimizer.beta1;
  opt["beta2"] = t.optimizer.beta2;
  opt["eps"] = t.optimizer.eps;
  opt["eps_root"] = t.optimizer.eps_root;
  tr["adabelief"] = opt;
  tr["chunk_centers"] = t.chunk_centers;
  tr["chunk_segments"] = t.chunk_segments;
  tr["max_consecutive_skips"] = t.max_consecutive_skips;
  tr["log_wallclock"] = t.log_wallclock;
  j["train"] = tr;

  const EvalConfig& e = c.eval;
  ordered_json ev;
  ev["vpt_threshold"] = e.vpt_threshold;
  ev["lambda1"] = e.lambda1 ? ordered_json(*e.lambda1) : ordered_json(nullptr);
  ev["attractor_samples"] = e.attractor_samples;
  ev["lyapunov_times"] = e.lyapunov_times;
  ev["mmd_grid"] = e.mmd_grid;
  ev["plateau_from"] = e.plateau_from;
  ev["bandwidths"] = e.kernel.bandwidths;
  ev["sinkhorn_epsilon_scale"] = e.sinkhorn.epsilon_scale;
  ev["sinkhorn_epsilon"] = e.sinkhorn.epsilon;
  ev["sinkhorn_max_iter"] = e.sinkhorn.max_iter;
  ev["sinkhorn_tol"] = e.sinkhorn.tol;
  ev["sinkhorn_pieces"] = e.sinkhorn_pieces;
  ev["n_sub"] = e.n_sub;
  ev["lyapunov_ics"] = e.lyapunov_ics;
  ev["lyapunov_horizon"] = e.lyapunov_horizon;
  ev["reorth_dt"] = e.reorth_dt;
  ev["lambda1_ics"] = e.lambda1_ics;
  ev["seed"] = e.seed;
  ev["ctrl"] = ctrl_to_json(e.ctrl);
  j["eval"] = ev;

  ordered_json sw;
  sw["k"] = c.sweep_k;
  sw["lambda"] = c.sweep_lambda;
  j["sweep"] = sw;
  return j;
}

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c;
  StrictReader r(j, "config");
  r.get("name", c.name);
  r.get("system", c.system);
  r.get("lorenz96_dim", c.lorenz96_dim);
  r.get("noise_std", c.noise_std);
  r.get("data_seed", c.data_seed);
  r.get("data_dir", c.data_dir);
  r.get("runs_dir", c.runs_dir);
  r.nested("generation", [&](StrictReader& g) {
    g.get("n_traj", c.generation.n_traj);
    g.get("m", c.generation.m);
    g.get("dt_fraction", c.generation.dt_fraction);
    g.get("tau_horizon", c.generation.tau_horizon);
    g.get("fft_length", c.generation.fft_length);
    g.nested("ctrl", [&](StrictReader& s) { ctrl_from(s, c.generation.ctrl); });
  });
  r.nested("cover", [&](StrictReader& g) {
    g.get("target_frac", c.cover.target_frac);
    g.get("multiplier", c.cover.multiplier);
    g.get("n_centers", c.cover.n_centers);
    g.get("rel_tol", c.cover.rel_tol);
    g.get("seed", c.cover.seed);
  });
  r.nested("train", [&](StrictReader& g) {
    TrainConfig& t = c.train;
    std::string method = method_name(t.method);
    g.get("method", method);
    t.method = method_from_name(method);
    g.get("horizon", t.horizon);
    g.get("batch_size", t.batch_size);
    g.get("k", t.k);
    g.get("lambda", t.lambda);
    g.get("lr", t.lr);
    g.get("steps", t.steps);
    g.get("val_every", t.val_every);
    g.get("seed", t.seed);
    g.get("n_sub", t.n_sub);
    g.get("taylor_order", t.taylor_order);
    g.get("bandwidths", t.kernel.bandwidths);
    g.get("hidden", t.hidden);
    g.nested("adabelief", [&](StrictReader& o) {
      o.get("beta1", t.optimizer.beta1);
      o.get("beta2", t.optimizer.beta2);
      o.get("eps", t.optimizer.eps);
      o.get("eps_root", t.optimizer.eps_root);
    });
    g.get("chunk_centers", t.chunk_centers);
    g.get("chunk_segments", t.chunk_segments);
    g.get("max_consecutive_skips", t.max_consecutive_skips);
    g.get("log_wallclock", t.log_wallclock);
  });
  r.nested("eval", [&](StrictReader& g) {
    EvalConfig& e = c.eval;
    g.get("vpt_threshold", e.vpt_threshold);
    g.get("lambda1", e.lambda1);
    g.get("attractor_samples", e.attractor_samples);
    g.get("lyapunov_times", e.lyapunov_times);
    g.get("mmd_grid", e.mmd_grid);
    g.get("plateau_from", e.plateau_from);
    g.get("bandwidths", e.kernel.bandwidths);
    g.get("sinkhorn_epsilon_scale", e.sinkhorn.epsilon_scale);
    g.get("sinkhorn_epsilon", e.sinkhorn.epsilon);
    g.get("sinkhorn_max_iter", e.sinkhorn.max_iter);
    g.get("sinkhorn_tol", e.sinkhorn.tol);
    g.get("sinkhorn_pieces", e.sinkhorn_pieces);
    g.get("n_sub", e.n_sub);
    g.get("lyapunov_ics", e.lyapunov_ics);
    g.get("lyapunov_horizon", e.lyapunov_horizon);
    g.get("reorth_dt", e.reorth_dt);
    g.get("lambda1_ics", e.lambda1_ics);
    g.get("seed", e.seed);
    g.nested("ctrl", [&](StrictReader& s) { ctrl_from(s, e.ctrl); });
  });
  r.nested("sweep", [&](StrictReader& g) {
    g.get("k", c.sweep_k);
    g.get("lambda", c.sweep_lambda);
  });
  r.finish();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ArgumentError("config file not found: " + path.string());
  json j;
  try {
    j = json::parse(io::read_text(path));
  } catch (const json::parse_error& e) {
    throw ArgumentError("cannot parse " + path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

void save_config(const ExperimentConfig& c, const std::filesystem::path& path) {
  io::write_text(path, config_to_json(c).dump(2) + "\n");
}

}  // namespace nbode
