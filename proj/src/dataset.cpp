#include "nbode/dataset.hpp"

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "nbode/binary_io.hpp"
#include "nbode/errors.hpp"
#include "nbode/parallel.hpp"
#include "nbode/spectrum.hpp"

namespace nbode {

namespace {

constexpr int kFormatVersion = 1;

enum Stream : std::uint64_t { kInitialStream = 1, kNoiseStream = 2 };

std::uint64_t split_seed(std::uint64_t seed, Split split, Stream stream) {
  return derive_seed(seed, static_cast<std::uint64_t>(split) * 16 + stream);
}

FieldFn system_field(const SystemSpec& spec) {
  return [&spec](const Vec& u, Vec& du) { du = eval_vector_field(spec, u); };
}

}  // namespace

std::string_view split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "train";
}

Split split_from_name(std::string_view name) {
  if (name == "train") return Split::Train;
  if (name == "val") return Split::Val;
  if (name == "test") return Split::Test;
  throw ArgumentError("unknown split '" + std::string(name) + "'");
}

const RowMat& TrajectoryDataset::clean_states() const {
  if (!clean) throw ArgumentError("dataset has no clean states");
  return *clean;
}

TrainContext train_context(const TrajectoryDataset& train) {
  if (train.split != Split::Train) throw SequencingError("train context must come from a train split");
  return {train.tau, train.transform};
}

RowMat sample_on_attractor(const SystemSpec& spec, int n, std::uint64_t seed, const StepControl& ctrl) {
  if (n < 0) throw ArgumentError("sample count must be non-negative");
  RowMat out(n, spec.dim);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < spec.dim; ++k) out(i, k) = spec.init_mean(k) + spec.init_std(k) * normal(rng);
  }
  const FieldFn field = system_field(spec);
  parallel_for(static_cast<std::size_t>(n), [&](std::size_t i) {
    const auto r = static_cast<Eigen::Index>(i);
    try {
      AdaptiveIntegrator integ(field, ctrl);
      integ.reset(out.row(r).transpose(), 0.0);
      integ.advance(spec.burn_in, {}, [](std::size_t, const Vec&) {}, spec.burn_in);
      out.row(r) = integ.state().transpose();
    } catch (const IntegrationError& e) {
      throw GenerationError("burn-in failed for trajectory " + std::to_string(i) + ": " + e.what(),
                            static_cast<int>(i));
    }
  });
  return out;
}

RowMat simulate_trajectories(const SystemSpec& spec, const RowMat& initial, int m, double dt,
                             const StepControl& ctrl) {
  if (m < 1 || !(dt > 0.0)) throw ArgumentError("simulate_trajectories needs m >= 1 and dt > 0");
  const auto n = initial.rows();
  RowMat out(n * m, spec.dim);
  std::vector<double> times(static_cast<std::size_t>(m));
  for (int j = 0; j < m; ++j) times[static_cast<std::size_t>(j)] = j * dt;
  const double t_end = std::max(times.back(), dt);
  const FieldFn field = system_field(spec);
  parallel_for(static_cast<std::size_t>(n), [&](std::size_t i) {
    const auto r = static_cast<Eigen::Index>(i);
    try {
      AdaptiveIntegrator integ(field, ctrl);
      integ.reset(initial.row(r).transpose(), 0.0);
      integ.advance(
          t_end, times,
          [&](std::size_t j, const Vec& u) { out.row(r * m + static_cast<Eigen::Index>(j)) = u.transpose(); },
          t_end);
    } catch (const IntegrationError& e) {
      throw GenerationError("simulation failed for trajectory " + std::to_string(i) + ": " + e.what(),
                            static_cast<int>(i));
    }
  });
  return out;
}

double estimate_timescale(const SystemSpec& spec, const RowMat& initial, double horizon,
                          int fft_length, const StepControl& ctrl) {
  if (fft_length < 16 || !(horizon > 0.0)) throw ArgumentError("invalid timescale estimation settings");
  const double sample_dt = horizon / fft_length;
  const RowMat all = simulate_trajectories(spec, initial, fft_length, sample_dt, ctrl);
  std::vector<RowMat> signals;
  signals.reserve(static_cast<std::size_t>(initial.rows()));
  for (Eigen::Index i = 0; i < initial.rows(); ++i) {
    signals.emplace_back(all.middleRows(i * fft_length, fft_length));
  }
  return timescale_from_signals(signals, sample_dt);
}

double estimate_timescale(const SystemSpec& spec, int n_traj, double horizon, std::uint64_t seed,
                          int fft_length) {
  const RowMat initial = sample_on_attractor(spec, n_traj, seed);
  return estimate_timescale(spec, initial, horizon, fft_length);
}

AffineTransform fit_transform(const RowMat& states) {
  if (states.rows() == 0) throw ArgumentError("cannot fit a transform to no states");
  AffineTransform t;
  t.shift = states.colwise().mean().transpose();
  t.scale.resize(states.cols());
  for (Eigen::Index k = 0; k < states.cols(); ++k) {
    const double var = (states.col(k).array() - t.shift(k)).square().mean();
    t.scale(k) = std::sqrt(var);
  }
  t.validate();
  return t;
}

TrajectoryDataset generate_dataset(const SystemSpec& spec, Split split, double noise_std,
                                   std::uint64_t seed, const TrainContext* train,
                                   const GenerationOptions& opts) {
  if (!(noise_std >= 0.0)) throw ArgumentError("noise_std must be >= 0");
  if (opts.n_traj < 1 || opts.m < 2) throw ArgumentError("need at least one trajectory of two states");
  if (split != Split::Train && train == nullptr) {
    throw SequencingError("generate the train split first: " + std::string(split_name(split)) +
                          " needs the train normalization");
  }

  const RowMat initial = sample_on_attractor(spec, opts.n_traj, split_seed(seed, split, kInitialStream),
                                             opts.ctrl);
  double tau = 0.0;
  if (train) {
    tau = train->tau;
  } else if (opts.tau) {
    tau = *opts.tau;
  } else {
    tau = estimate_timescale(spec, initial, opts.tau_horizon, opts.fft_length, opts.ctrl);
  }
  if (!(tau > 0.0)) throw ArgumentError("timescale must be positive");

  TrajectoryDataset ds;
  ds.system = spec;
  ds.split = split;
  ds.n = opts.n_traj;
  ds.m = opts.m;
  ds.d = spec.dim;
  ds.dt = opts.dt_fraction * tau;
  ds.tau = tau;
  ds.noise_std = noise_std;
  ds.seed = seed;

  const RowMat raw = simulate_trajectories(spec, initial, opts.m, ds.dt, opts.ctrl);
  ds.transform = train ? train->transform : fit_transform(raw);
  RowMat clean = ds.transform.apply_rows(raw);

  ds.states = clean;
  if (split != Split::Test && noise_std > 0.0) {
    std::mt19937_64 rng(split_seed(seed, split, kNoiseStream));
    std::normal_distribution<double> normal(0.0, noise_std);
    for (Eigen::Index r = 0; r < ds.states.rows(); ++r) {
      for (Eigen::Index k = 0; k < ds.states.cols(); ++k) ds.states(r, k) += normal(rng);
    }
  }
  ds.clean = std::move(clean);
  return ds;
}

void save_dataset(const TrajectoryDataset& ds, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::ordered_json meta;
  meta["format_version"] = kFormatVersion;
  meta["system"] = std::string(system_name(ds.system.kind));
  nlohmann::ordered_json params = nlohmann::ordered_json::object();
  for (const auto& [k, v] : ds.system.params) params[k] = v;
  meta["params"] = params;
  meta["split"] = std::string(split_name(ds.split));
  meta["n"] = ds.n;
  meta["m"] = ds.m;
  meta["d"] = ds.d;
  meta["dt"] = ds.dt;
  meta["tau"] = ds.tau;
  meta["transform"] = {{"shift", std::vector<double>(ds.transform.shift.begin(), ds.transform.shift.end())},
                       {"scale", std::vector<double>(ds.transform.scale.begin(), ds.transform.scale.end())}};
  meta["noise_std"] = ds.noise_std;
  meta["seed"] = ds.seed;
  meta["has_clean"] = ds.clean.has_value();
  io::write_text(dir / "meta.json", meta.dump(2) + "\n");
  io::write_f64(dir / "states.bin", {ds.states.data(), static_cast<std::size_t>(ds.states.size())});
  if (ds.clean) {
    io::write_f64(dir / "clean.bin", {ds.clean->data(), static_cast<std::size_t>(ds.clean->size())});
  } else {
    std::filesystem::remove(dir / "clean.bin");
  }
}

TrajectoryDataset load_dataset(const std::filesystem::path& dir) {
  if (!std::filesystem::exists(dir / "meta.json")) {
    throw FormatError("no dataset at " + dir.string() + " (meta.json missing)");
  }
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(io::read_text(dir / "meta.json"));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed meta.json in " + dir.string() + ": " + e.what());
  }
  try {
    if (meta.at("format_version").get<int>() != kFormatVersion) {
      throw FormatError("unsupported dataset format version in " + dir.string());
    }
    TrajectoryDataset ds;
    ds.d = meta.at("d").get<int>();
    SystemSpec spec = system_from_name(meta.at("system").get<std::string>());
    if (spec.kind == SystemKind::Lorenz96) spec = make_system(SystemKind::Lorenz96, ds.d);
    for (const auto& [k, v] : meta.at("params").items()) spec.params[k] = v.get<double>();
    if (spec.dim != ds.d) throw FormatError("dimension does not match system in " + dir.string());
    ds.system = spec;
    ds.split = split_from_name(meta.at("split").get<std::string>());
    ds.n = meta.at("n").get<int>();
    ds.m = meta.at("m").get<int>();
    ds.dt = meta.at("dt").get<double>();
    ds.tau = meta.at("tau").get<double>();
    const auto shift = meta.at("transform").at("shift").get<std::vector<double>>();
    const auto scale = meta.at("transform").at("scale").get<std::vector<double>>();
    if (static_cast<int>(shift.size()) != ds.d || static_cast<int>(scale.size()) != ds.d) {
      throw FormatError("transform size mismatch in " + dir.string());
    }
    ds.transform.shift = Eigen::Map<const Vec>(shift.data(), ds.d);
    ds.transform.scale = Eigen::Map<const Vec>(scale.data(), ds.d);
    ds.noise_std = meta.at("noise_std").get<double>();
    ds.seed = meta.at("seed").get<std::uint64_t>();

    const auto count = static_cast<std::size_t>(ds.n) * ds.m * ds.d;
    auto load = [&](const char* name) {
      const auto values = io::read_f64(dir / name, count);
      return RowMat(Eigen::Map<const RowMat>(values.data(), static_cast<Eigen::Index>(ds.n) * ds.m, ds.d));
    };
    ds.states = load("states.bin");
    if (meta.at("has_clean").get<bool>()) ds.clean = load("clean.bin");
    return ds;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("invalid meta.json in " + dir.string() + ": " + e.what());
  }
}

}  // namespace nbode
