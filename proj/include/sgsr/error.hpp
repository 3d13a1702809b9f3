#pragma once

#include <stdexcept>
#include <string>

namespace sgsr {

// Shape/axis disagreements between tensors (message names the offending axis).
struct DimensionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Invalid configuration values (group counts, scale factors, fractions, ...).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed file contents (bad magic, bad header fields).
struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Structurally valid file that ends early or carries inconsistent sizes.
struct IntegrityError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Non-finite values where finite math was expected; message names the op.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Filesystem-level failures, with path context.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace sgsr
