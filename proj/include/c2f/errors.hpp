#pragma once

#include <stdexcept>
#include <string>

namespace c2f {

// Shape or dimension mismatch between tensors, including degenerate lengths.
struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid runtime values: labels out of range, all-masked statistics, bad arguments.
struct ValidationError : std::runtime_error {
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed files (bad magic, truncation, non-finite payload).
struct FormatError : std::runtime_error {
    explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad configuration: unknown keys, unparsable values, invalid combinations.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace c2f
