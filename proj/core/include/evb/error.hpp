#pragma once

#include <stdexcept>
#include <string>

namespace evb {

// Base for every error raised by the library. The CLI maps the concrete
// subclasses onto process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration or arguments (bad theta/gamma, empty budget, cap = 0, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Dimension or shape disagreement between data and a model or projection.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Malformed input document (CSV, JSON, vocabulary file).
class FormatError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf encountered in features, weights or intermediate values.
class NumericError : public Error {
 public:
  using Error::Error;
};

// A file the current stage depends on is not on disk.
class MissingArtifactError : public Error {
 public:
  using Error::Error;
};

}  // namespace evb
