#pragma once

#include <functional>
#include <ostream>

#include "nbode/config.hpp"
#include "nbode/errors.hpp"

namespace nbode::cli {

// Bad flags, bad config values, missing inputs or refused overwrites (exit code 2).
class UsageError : public ArgumentError {
 public:
  using ArgumentError::ArgumentError;
};

// Writes <data_dir>/{train,val,test}. Refuses to overwrite without `force`.
void generate(const ExperimentConfig& cfg, bool force, std::ostream& log);
// Calibrates radii on the train split and caches the cover in <data_dir>/cover.
NeighborCover neighbors(const ExperimentConfig& cfg, std::ostream& log);
// Trains into <runs_dir>/<name>: config.resolved.json, model.json, params.bin, train_log.csv.
TrainResult train(const ExperimentConfig& cfg, bool force, std::ostream& log);
// Evaluates the run's checkpoint on the clean test and validation splits.
EvalReport eval(const ExperimentConfig& cfg, std::ostream& log);
// Ground-truth spectrum, or the model comparison when `with_model` is set.
void lyapunov(const ExperimentConfig& cfg, bool with_model, std::ostream& log);
SweepResult sweep(const ExperimentConfig& cfg, bool force, std::ostream& log);

// Runs fn and maps failures to exit codes: 0 ok, 1 runtime failure, 2 usage or config error.
int guarded(const std::function<void()>& fn, std::ostream& err);

}  // namespace nbode::cli
