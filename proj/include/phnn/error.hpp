#pragma once

#include <stdexcept>
#include <string>

namespace phnn {

struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor shape / operation contract violations.
struct ShapeError : Error {
  using Error::Error;
};

// Bad configuration: flags, config files, checkpoints. CLI exit code 2.
struct ConfigError : Error {
  using Error::Error;
};

// Bad input data: manifests, labels, volumes. CLI exit code 3.
struct DataError : Error {
  using Error::Error;
};

// Malformed binary file; message names the byte offset.
struct FormatError : DataError {
  using DataError::DataError;
};

// Training hit a non-finite loss. CLI exit code 4.
struct DivergenceError : Error {
  using Error::Error;
};

// Operation on uninitialized state, e.g. eval-mode batch norm before
// any running statistics exist.
struct StateError : Error {
  using Error::Error;
};

}  // namespace phnn
