// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace evomerge {

/// Base class for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Malformed or invalid archive / config / checkpoint contents.
struct FormatError : Error {
  using Error::Error;
};

/// Key sets or shapes disagree across checkpoints.
struct AlignmentError : Error {
  using Error::Error;
};

/// Invalid user-supplied configuration (bounds, lengths, unknown fields).
struct ConfigError : Error {
  using Error::Error;
};

/// External process failed (nonzero exit, timeout, malformed output).
struct ProcessError : Error {
  using Error::Error;
};

}  // namespace evomerge
