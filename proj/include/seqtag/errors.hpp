#pragma once

#include <stdexcept>
#include <string>

namespace seqtag {

// Data/format problems: unreadable files, malformed lines, misaligned inputs.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Configuration problems: unknown keys, invalid values, bad usage.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Numeric problems: non-finite evaluations, domain violations.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Array shape mismatches; message names the kernel and the shapes involved.
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace seqtag
