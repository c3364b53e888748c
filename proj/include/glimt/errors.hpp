#pragma once

#include <stdexcept>
#include <string>

namespace glimt {

// Bad call-site arguments (shape mismatches, out-of-range configuration).
struct invalid_argument : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// A computation produced NaN/Inf where a finite value is required.
struct numeric_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Filesystem-level failures (unreadable path, short write).
struct io_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed file contents; message names the offending offset where known.
struct format_error : io_error {
    using io_error::io_error;
};

// Unusable run configuration (unknown task name, bad JSON field).
struct config_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace glimt
