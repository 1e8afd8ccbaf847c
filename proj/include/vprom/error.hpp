#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace vprom {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid or inconsistent configuration (bad bounds, cutoff above Nyquist, missing keys).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A value falls outside its admissible range.
class RangeError : public Error {
 public:
  using Error::Error;
};

/// Array or matrix shapes do not agree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Nonlinear solve failed. Carries the offending time step.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, long step) : Error(what), step_(step) {}
  long step() const noexcept { return step_; }

 private:
  long step_;
};

/// Malformed or unreadable persisted artifact.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Network training diverged. Carries the loss trace up to the failure.
class TrainingError : public Error {
 public:
  TrainingError(const std::string& what, std::vector<double> trace) : Error(what), trace_(std::move(trace)) {}
  const std::vector<double>& trace() const noexcept { return trace_; }

 private:
  std::vector<double> trace_;
};

}  // namespace vprom
