#pragma once

#include <stdexcept>
#include <string>

namespace spsr {

// Structured error hierarchy. The CLI maps ConfigError to exit code 3 and
// everything else derived from Error to exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor or image has the wrong rank, channel count or spatial size.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// A configuration value violates a documented constraint.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Dataset, image file or checkpoint problems.
class DataError : public Error {
 public:
  using Error::Error;
};

// Domain errors in numeric routines (zero-norm vectors, NaN losses, empty batches).
class NumericError : public Error {
 public:
  using Error::Error;
};

// Sampling could not satisfy its geometric constraints.
class SamplingError : public Error {
 public:
  using Error::Error;
};

class PluginError : public Error {
 public:
  using Error::Error;
};

}  // namespace spsr
