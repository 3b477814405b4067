#pragma once

#include <stdexcept>
#include <string>

#include "nbode/types.hpp"

namespace nbode {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid input shape, range or name.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

// Malformed or incompatible on-disk data.
class FormatError : public Error {
 public:
  using Error::Error;
};

class IntegrationError : public Error {
 public:
  IntegrationError(const std::string& what, double time) : Error(what), time_(time) {}
  double time() const noexcept { return time_; }

 private:
  double time_;
};

// Step size fell below the underflow floor.
class StiffnessError : public IntegrationError {
 public:
  using IntegrationError::IntegrationError;
};

// The state became non-finite; carries the last finite state.
class DivergenceError : public IntegrationError {
 public:
  DivergenceError(const std::string& what, double time, Vec last_state)
      : IntegrationError(what, time), last_state_(std::move(last_state)) {}
  const Vec& last_state() const noexcept { return last_state_; }

 private:
  Vec last_state_;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

class GenerationError : public Error {
 public:
  GenerationError(const std::string& what, int trajectory) : Error(what), trajectory_(trajectory) {}
  int trajectory() const noexcept { return trajectory_; }

 private:
  int trajectory_;
};

class EstimationError : public Error {
 public:
  using Error::Error;
};

class SequencingError : public Error {
 public:
  using Error::Error;
};

class CalibrationError : public Error {
 public:
  using Error::Error;
};

class CoverError : public Error {
 public:
  using Error::Error;
};

class EngineError : public Error {
 public:
  using Error::Error;
};

class RolloutError : public Error {
 public:
  RolloutError(const std::string& what, int step) : Error(what), step_(step) {}
  int step() const noexcept { return step_; }

 private:
  int step_;
};

class BatchError : public Error {
 public:
  using Error::Error;
};

class TrainingAbort : public Error {
 public:
  using Error::Error;
};

}  // namespace nbode
