#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "nbode/commands.hpp"
#include "nbode/parallel.hpp"

namespace {

using nbode::ExperimentConfig;

// Flags shared by every subcommand; each overrides the matching config field when given.
struct Overrides {
  std::string config;
  std::optional<std::string> name, data, runs, system;
  std::optional<double> noise;
  std::optional<std::uint64_t> data_seed;
  std::optional<int> n_traj, m, lorenz96_dim;
  std::optional<std::string> method;
  std::optional<double> lambda, lr, lambda1, lyapunov_horizon;
  std::optional<int> k, batch_size, horizon, val_every, attractor_samples, lyapunov_ics;
  std::optional<long> steps;
  std::optional<std::uint64_t> train_seed, eval_seed;
  bool log_wallclock = false;
  bool force = false;

  void add_common(CLI::App* app) {
    app->add_option("--config", config, "experiment config (JSON)");
    app->add_option("--name", name, "run name under the runs directory");
    app->add_option("--data,--out", data, "dataset directory");
    app->add_option("--runs", runs, "runs directory");
    app->add_option("--system", system, "lorenz63, chen_hyper or lorenz96");
    app->add_option("--lorenz96-dim", lorenz96_dim, "Lorenz96 dimension");
    app->add_option("--noise", noise, "noise standard deviation in normalized units");
    app->add_option("--data-seed", data_seed, "dataset seed");
    app->add_option("--n-traj", n_traj, "trajectories per split");
    app->add_option("--m", m, "states per trajectory");
  }

  void add_train(CLI::App* app) {
    app->add_option("--method", method, "vanilla or neighborhood");
    app->add_option("--lambda", lambda, "neighborhood loss weight");
    app->add_option("--k", k, "neighbors per center");
    app->add_option("--batch-size", batch_size, "states per batch");
    app->add_option("--horizon", horizon, "rollout steps per segment");
    app->add_option("--lr", lr, "learning rate");
    app->add_option("--steps", steps, "optimizer steps");
    app->add_option("--val-every", val_every, "validation interval in steps");
    app->add_option("--train-seed", train_seed, "model and batch seed");
    app->add_flag("--log-wallclock", log_wallclock, "record wall-clock time in the training log");
  }

  void add_eval(CLI::App* app) {
    app->add_option("--lambda1", lambda1, "largest Lyapunov exponent (estimated when omitted)");
    app->add_option("--attractor-samples", attractor_samples, "points for the attractor MMD curve");
    app->add_option("--lyapunov-ics", lyapunov_ics, "initial conditions for Lyapunov spectra");
    app->add_option("--lyapunov-horizon", lyapunov_horizon, "integration time for Lyapunov spectra");
    app->add_option("--eval-seed", eval_seed, "seed for evaluation samples");
  }

  ExperimentConfig resolve() const {
    ExperimentConfig c = config.empty() ? ExperimentConfig{} : nbode::load_config(config);
    if (name) c.name = *name;
    if (data) c.data_dir = *data;
    if (runs) c.runs_dir = *runs;
    if (system) c.system = *system;
    if (lorenz96_dim) c.lorenz96_dim = *lorenz96_dim;
    if (noise) c.noise_std = *noise;
    if (data_seed) c.data_seed = *data_seed;
    if (n_traj) c.generation.n_traj = *n_traj;
    if (m) c.generation.m = *m;
    if (method) c.train.method = nbode::method_from_name(*method);
    if (lambda) c.train.lambda = *lambda;
    if (k) c.train.k = *k;
    if (batch_size) c.train.batch_size = *batch_size;
    if (horizon) c.train.horizon = *horizon;
    if (lr) c.train.lr = *lr;
    if (steps) c.train.steps = *steps;
    if (val_every) c.train.val_every = *val_every;
    if (train_seed) c.train.seed = *train_seed;
    if (log_wallclock) c.train.log_wallclock = true;
    if (lambda1) c.eval.lambda1 = *lambda1;
    if (attractor_samples) c.eval.attractor_samples = *attractor_samples;
    if (lyapunov_ics) c.eval.lyapunov_ics = *lyapunov_ics;
    if (lyapunov_horizon) c.eval.lyapunov_horizon = *lyapunov_horizon;
    if (eval_seed) c.eval.seed = *eval_seed;
    if (method && *method == "vanilla" && lambda && *lambda != 0.0) {
      throw nbode::ArgumentError("--method vanilla cannot be combined with a nonzero --lambda");
    }
    c.normalize();
    c.validate();
    return c;
  }
};

}  // namespace

int main(int argc, char** argv) {
  nbode::tune_allocator();
  CLI::App app{"Neural ODE training on chaotic systems with neighborhood-based losses"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "worker thread cap (default: NBODE_THREADS or 1)");

  Overrides o;
  bool with_model = false;
  // `generate --seed` sets the dataset seed; `train --seed` the training seed.
  auto* gen = app.add_subcommand("generate", "simulate train/val/test datasets");
  o.add_common(gen);
  gen->add_option("--seed", o.data_seed, "dataset seed");
  gen->add_flag("--force", o.force, "overwrite existing datasets");

  auto* nb = app.add_subcommand("neighbors", "calibrate radii and cache the neighbor cover");
  o.add_common(nb);
  o.add_train(nb);

  auto* tr = app.add_subcommand("train", "train a model");
  o.add_common(tr);
  o.add_train(tr);
  tr->add_option("--seed", o.train_seed, "model and batch seed");
  tr->add_flag("--force", o.force, "overwrite an existing run");

  auto* ev = app.add_subcommand("eval", "evaluate a trained run");
  o.add_common(ev);
  o.add_eval(ev);

  auto* ly = app.add_subcommand("lyapunov", "Lyapunov spectra of the ground truth or a trained run");
  o.add_common(ly);
  o.add_eval(ly);
  ly->add_flag("--model", with_model, "compare the run's model with the ground truth");

  auto* sw = app.add_subcommand("sweep", "grid search over K and lambda scored by Sinkhorn divergence");
  o.add_common(sw);
  o.add_train(sw);
  o.add_eval(sw);
  sw->add_flag("--force", o.force, "overwrite an existing sweep");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  if (threads > 0) nbode::set_thread_count(threads);

  return nbode::cli::guarded(
      [&] {
        const ExperimentConfig cfg = o.resolve();
        if (gen->parsed()) {
          nbode::cli::generate(cfg, o.force, std::cout);
        } else if (nb->parsed()) {
          nbode::cli::neighbors(cfg, std::cout);
        } else if (tr->parsed()) {
          nbode::cli::train(cfg, o.force, std::cout);
        } else if (ev->parsed()) {
          nbode::cli::eval(cfg, std::cout);
        } else if (ly->parsed()) {
          nbode::cli::lyapunov(cfg, with_model, std::cout);
        } else if (sw->parsed()) {
          nbode::cli::sweep(cfg, o.force, std::cout);
        }
      },
      std::cerr);
}
