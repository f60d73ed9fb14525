#pragma once

#include <stdexcept>
#include <string>

namespace fieldev {

// Base of every error raised by the library. The CLI maps the subclasses
// onto process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Malformed or inconsistent input file.
class LoadError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Linear solver failure, CFL underflow, saturation leaving its bounds.
class NumericalError : public Error {
 public:
  NumericalError(const std::string& what, double residual = 0.0)
      : Error(what), residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

// Checksum mismatch on a restart token or checkpoint.
class IntegrityError : public Error {
 public:
  using Error::Error;
};

// API used out of order: step after done, backward before forward.
class LifecycleError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

// Non-finite loss or gradient during training.
class TrainingError : public Error {
 public:
  using Error::Error;
};

class BudgetError : public Error {
 public:
  using Error::Error;
};

}  // namespace fieldev
