#pragma once

#include <stdexcept>
#include <string>

namespace elastic {

// Base for everything thrown by this library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A spec or configuration is internally inconsistent (bad divisibility,
// fractions that do not sum to one, impossible stage layouts, ...).
struct ConfigError : Error {
  using Error::Error;
};

// A runtime input is unusable (shape mismatch, label out of range,
// resolution the network cannot consume, degenerate spatial dims).
struct InputError : Error {
  using Error::Error;
};

// The API was called in a way that is never valid (backward on a
// non-scalar, transforming an already-Elastic spec, ...).
struct UsageError : Error {
  using Error::Error;
};

// A file or byte stream does not match its documented format.
struct FormatError : Error {
  using Error::Error;
};

// Filesystem level failure; message carries the path.
struct IoError : Error {
  using Error::Error;
};

// Training diverged; message carries epoch, step and learning rate.
struct TrainingDiverged : Error {
  using Error::Error;
};

}  // namespace elastic
