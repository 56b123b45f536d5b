#pragma once

#include <stdexcept>
#include <string>

namespace ces {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Mismatched lengths or shapes, empty inputs.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Non-finite values, divergence, degenerate numeric input.
class NumericError : public Error {
public:
    using Error::Error;
};

/// Malformed or truncated files.
class FormatError : public Error {
public:
    using Error::Error;
};

/// Invalid configuration or arguments.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Filesystem failures.
class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace ces
