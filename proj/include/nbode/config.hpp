#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "nbode/cover.hpp"
#include "nbode/dataset.hpp"
#include "nbode/eval.hpp"
#include "nbode/train.hpp"

namespace nbode {

/// Everything needed to reproduce one experiment. Serialized as JSON; missing
/// keys take the defaults below and unknown keys are rejected.
struct ExperimentConfig {
  std::string name = "run";
  std::string system = "lorenz63";
  int lorenz96_dim = 6;
  double noise_std = 0.0;
  std::uint64_t data_seed = 0;
  std::string data_dir = "data";
  std::string runs_dir = "runs";
  GenerationOptions generation;
  CalibrationOptions cover;
  TrainConfig train;
  EvalConfig eval;
  std::vector<int> sweep_k{8, 16, 32, 64};
  std::vector<double> sweep_lambda{1.0, 10.0, 100.0, 1000.0};

  // Vanilla training has no neighborhood term, so lambda is pinned to 0.
  void normalize();
  void validate() const;
  SystemSpec system_spec() const;
  std::filesystem::path run_dir() const { return std::filesystem::path(runs_dir) / name; }
  std::filesystem::path split_dir(Split s) const { return std::filesystem::path(data_dir) / split_name(s); }
  std::filesystem::path cover_dir() const { return std::filesystem::path(data_dir) / "cover"; }
};

nlohmann::ordered_json config_to_json(const ExperimentConfig& c);
// Throws ArgumentError on unknown keys or ill-typed values.
ExperimentConfig config_from_json(const nlohmann::json& j);

ExperimentConfig load_config(const std::filesystem::path& path);
void save_config(const ExperimentConfig& c, const std::filesystem::path& path);

}  // namespace nbode
