#pragma once

#include <stdexcept>
#include <string>

namespace fer {

inline constexpr const char* kVersion = "0.1.0";

/// Base class for every error this library throws.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Shape / extent mismatches between tensors or layers.
struct DimensionError : Error {
  using Error::Error;
};

/// Malformed input files (manifests, sidecars, images, CSV).
struct ParseError : Error {
  using Error::Error;
};

/// Filesystem-level failures (missing file, short read, unwritable path).
struct IoError : Error {
  using Error::Error;
};

}  // namespace fer
