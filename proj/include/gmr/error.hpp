#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace gmr {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed mesh/config/camera file. `line()` is 1-based, 0 when unknown
/// (binary payloads).
class ParseError : public Error {
public:
    ParseError(const std::string &source, std::size_t line, const std::string &what)
        : Error(source + (line ? ":" + std::to_string(line) : std::string()) + ": " + what),
          line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class IoError : public Error {
public:
    using Error::Error;
};

/// Geometry that cannot be processed (all vertices coincident, zero area, ...).
class GeometryError : public Error {
public:
    using Error::Error;
};

/// Mismatched array lengths or image shapes.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// NaN/Inf in an input that must be finite.
class NonFiniteError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

} // namespace gmr
