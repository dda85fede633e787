#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace hgr {

/// Base class for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Tensor/operand shapes do not line up (channel mismatch, wrong rank, ...).
struct ShapeError : Error {
  using Error::Error;
};

/// An operation or run was configured with invalid settings
/// (bad padding/stride combination, unknown config key, bad CLI flag).
struct ConfigError : Error {
  using Error::Error;
};

/// Problems with datasets, checkpoints or other files on disk.
struct DataError : Error {
  using Error::Error;
};

/// Numeric failure during training (NaN/Inf loss, divergence).
struct NumericError : Error {
  using Error::Error;
};

// Global kernel thread budget. Applies to BLAS calls and the library's own
// parallel loops. 1 = fully sequential (the deterministic reference mode).
void set_threads(int n);
int threads();

// Count of batch-norm "eval before any training" diagnostics emitted so far.
std::int64_t diagnostic_count();
void note_diagnostic(const std::string& message);

const char* version_string();

}  // namespace hgr
