#pragma once

#include <stdexcept>
#include <string>

namespace fedlab {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad call arguments or violated preconditions.
struct InvalidArgumentError : Error {
    using Error::Error;
};

// Iteration caps exceeded, NaN/Inf encountered, negative radicands, etc.
struct NumericalError : Error {
    using Error::Error;
};

// Malformed file contents (bad magic numbers, inconsistent headers).
struct FormatError : Error {
    using Error::Error;
};

// Mismatching counts between files that must agree.
struct ConsistencyError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

// Config parse/validation failures; message carries line number or field path.
struct ConfigError : Error {
    using Error::Error;
};

}  // namespace fedlab
