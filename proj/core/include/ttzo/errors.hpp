// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace ttzo {

// Base class for every error the library raises on purpose. Callers that
// want a single catch site can catch this; tests usually catch the concrete
// type to pin down which validation fired.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Factor list shape disagrees with the layer spec (wrong count, wrong
// per-factor length, rank chain broken).
struct ShapeMismatch : Error {
  using Error::Error;
};

// Spec-level validation failure: mode products don't match the dense
// dimensions, a boundary rank differs from one, an empty factor list, or
// a dimension that cannot be factorized as requested.
struct BadParams : Error {
  using Error::Error;
};

// Partition request outside [2, 2*order] for a parallel contraction.
struct BadPartition : Error {
  using Error::Error;
};

// Buffer length does not match the registry's trainable dimension, or a
// segment write crosses an entry boundary.
struct LengthMismatch : Error {
  using Error::Error;
};

// A loss evaluation produced NaN or +/-inf. The training loop treats this
// as divergence, not as a programming error.
struct NonFiniteLoss : Error {
  using Error::Error;
};

// Bad run configuration (unknown key, unparsable value, missing section).
struct ConfigError : Error {
  using Error::Error;
};

// Filesystem-level failure (unwritable output dir, truncated checkpoint).
struct IoError : Error {
  using Error::Error;
};

}  // namespace ttzo
