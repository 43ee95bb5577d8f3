#pragma once

#include <stdexcept>
#include <string>

namespace batchens {

// Base class for every error this library raises. Subclasses map to the
// failure categories the CLI reports (and turns into exit codes).
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Incompatible matrix/vector dimensions. Messages name both shapes.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Invalid argument value (bad range, NaN input, empty vector, ...).
class ArgumentError : public Error {
 public:
  using Error::Error;
};

// Out-of-range member / head / bin index.
class IndexError : public Error {
 public:
  using Error::Error;
};

// Operation performed against stale or inconsistent state
// (mismatched forward cache, missing checkpoint, missing snapshot).
class StateError : public Error {
 public:
  using Error::Error;
};

// Invalid experiment or training configuration. Messages name the key.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed input file (bad magic, truncation, count mismatch).
class FormatError : public Error {
 public:
  using Error::Error;
};

// Training diverged (non-finite loss).
class TrainingError : public Error {
 public:
  using Error::Error;
};

// Filesystem read/write failure.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace batchens
