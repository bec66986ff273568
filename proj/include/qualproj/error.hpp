#pragma once

#include <stdexcept>
#include <string>

namespace qualproj {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Dimension mismatch between operands (vector lengths, layer fan-in/out).
struct ShapeError : Error {
    using Error::Error;
};

/// Value-level violation of a precondition (non-finite input, bad label, ...).
struct InvalidInputError : Error {
    using Error::Error;
};

/// Inconsistent or out-of-range configuration.
struct ConfigError : Error {
    using Error::Error;
};

/// Malformed input file; message names the offending file.
struct ParseError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

} // namespace qualproj
