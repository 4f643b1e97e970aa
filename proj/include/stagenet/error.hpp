#pragma once

#include <stdexcept>
#include <string>

namespace stagenet {

/// Base class for every error raised by the library. The CLI maps the
/// concrete subclasses onto process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes are incompatible.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// NaN or infinity where a finite value is required.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Caller supplied data that violates an operation's precondition.
class InputError : public Error {
 public:
  using Error::Error;
};

/// Invalid hyperparameter or generator settings.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Dataset file does not conform to the record schema.
class LoadError : public Error {
 public:
  using Error::Error;
};

/// Malformed JSON or CSV text.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Checkpoint version or parameter shape mismatch.
class CheckpointError : public Error {
 public:
  using Error::Error;
};

/// Ranking metric undefined for the given labels.
class MetricError : public Error {
 public:
  using Error::Error;
};

/// Optimisation diverged or produced a non-finite gradient.
class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace stagenet
