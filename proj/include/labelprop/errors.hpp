#pragma once

// Error taxonomy shared by the library. File- and configuration-level
// problems throw the typed errors below; caller contract violations
// (mismatched raster shapes and similar bugs) throw std::invalid_argument.

#include <stdexcept>
#include <string>

namespace labelprop {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed or unsupported file content (bad magic, truncation, schema drift).
class FormatError : public Error {
public:
    using Error::Error;
};

// Well-formed input whose values violate a declared range or invariant.
class ValidationError : public Error {
public:
    using Error::Error;
};

// Filesystem-level failure; the message names the offending path.
class IoError : public Error {
public:
    using Error::Error;
};

// Invalid run configuration (flag combinations, scene configs, train setups).
class ConfigError : public Error {
public:
    using Error::Error;
};

// Index or offset outside the bounds promised by the caller.
class RangeError : public Error {
public:
    using Error::Error;
};

// Inputs that make the requested quantity undefined (e.g. all-ignore loss).
class DegenerateError : public Error {
public:
    using Error::Error;
};

namespace detail {

inline void require(bool cond, const char* what) {
    if (!cond) throw std::invalid_argument(what);
}

} // namespace detail

} // namespace labelprop
