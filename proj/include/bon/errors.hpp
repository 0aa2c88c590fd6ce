#pragma once

#include <stdexcept>
#include <string>

namespace bon {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or out-of-contract values (bad indices, shape mismatch, ...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Dataset file missing or unparseable.
class IngestionError : public Error {
 public:
  using Error::Error;
};

/// Dataset content does not match its declared manifest.
class DatasetIntegrityError : public Error {
 public:
  using Error::Error;
};

/// Operation not supported by the active backend.
class CapabilityError : public Error {
 public:
  using Error::Error;
};

/// Backend-side failure while evaluating a candidate.
class BackendError : public Error {
 public:
  using Error::Error;
};

/// Run configuration problems.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace bon
