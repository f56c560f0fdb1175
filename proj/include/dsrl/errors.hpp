#pragma once

#include <stdexcept>
#include <string>

namespace dsrl {

// Error taxonomy shared across the library. The CLI maps these onto exit
// codes: ValidationError -> 1, everything else -> 2.

struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Geometric precondition violated (off-manifold input, non-tangent vector,
// points on different sheets, timelike norm where spacelike expected).
struct GeometryError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite value produced where a finite one is required.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// API contract broken by the caller (non-scalar loss, empty batch, ...).
struct ContractError : std::logic_error {
  using std::logic_error::logic_error;
};

// Bad user-supplied configuration or flags.
struct ValidationError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// File ingestion failures, one subclass per failure mode so callers and
// tests can tell them apart.
struct IngestionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct BadMagicError : IngestionError {
  using IngestionError::IngestionError;
};
struct BadVersionError : IngestionError {
  using IngestionError::IngestionError;
};
struct TruncatedFileError : IngestionError {
  using IngestionError::IngestionError;
};
struct ChecksumError : IngestionError {
  using IngestionError::IngestionError;
};

}  // namespace dsrl
