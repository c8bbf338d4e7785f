#pragma once

#include <stdexcept>
#include <string>

namespace steerlab {

// Base for all steerlab failures; catch this at the CLI boundary.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Tensor dimension disagreement; message names both shapes.
struct ShapeError : Error {
  using Error::Error;
};

// Caller violated an operation precondition.
struct ContractError : Error {
  using Error::Error;
};

// Malformed file content (bad magic, truncation, version); names the offset
// or line where known.
struct FormatError : Error {
  using Error::Error;
};

// Missing or inconsistent configuration (e.g. unresolved alpha).
struct ConfigError : Error {
  using Error::Error;
};

// Optimization diverged (NaN/Inf loss); message carries the step.
struct TrainingError : Error {
  using Error::Error;
};

// Transport-level failure talking to a remote backend.
struct BackendError : Error {
  using Error::Error;
};

// Remote service answered but violated the wire contract.
struct ProtocolError : Error {
  using Error::Error;
};

}  // namespace steerlab
