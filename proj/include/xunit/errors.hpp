#pragma once

#include <stdexcept>
#include <string>

namespace xunit {

// Shape/axis mismatches between tensors, kernels or layers.
struct DimensionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Invalid architecture or layer configuration.
struct SpecError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed model files.
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Dataset construction problems (images too small, empty manifests, ...).
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// File system / image decoding failures.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Misuse of the autodiff tape (unknown value ids, bad seeds).
struct GraphError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace xunit
