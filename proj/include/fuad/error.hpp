#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace fuad {

// Every failure raised by the library derives from Error so callers (the CLI
// in particular) can catch one type and print a single diagnostic line.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class InputError : public Error {
 public:
  using Error::Error;
};

class CapacityError : public Error {
 public:
  CapacityError(std::size_t required, std::size_t available)
      : Error("anomaly pool too small: required " + std::to_string(required) +
              ", available " + std::to_string(available)),
        required_(required),
        available_(available) {}

  std::size_t required() const { return required_; }
  std::size_t available() const { return available_; }

 private:
  std::size_t required_;
  std::size_t available_;
};

class IngestionError : public Error {
 public:
  using Error::Error;
};

class StateError : public Error {
 public:
  using Error::Error;
};

// Raised when a loss turns non-finite. Carries the last parameter vector that
// produced a finite loss so a caller can inspect or resume from it.
class TrainingError : public Error {
 public:
  TrainingError(const std::string& what, std::size_t step, std::vector<double> last_finite_params)
      : Error(what), step_(step), last_finite_params_(std::move(last_finite_params)) {}

  std::size_t step() const { return step_; }
  const std::vector<double>& last_finite_params() const { return last_finite_params_; }

 private:
  std::size_t step_;
  std::vector<double> last_finite_params_;
};

class MetricError : public Error {
 public:
  using Error::Error;
};

class ReportError : public Error {
 public:
  using Error::Error;
};

}  // namespace fuad
