#pragma once

#include <stdexcept>
#include <string>

namespace dtb {

/// Base class for all toolkit errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Invalid argument values (bad bounds, empty inputs, non-positive durations, ...).
class ArgumentError : public Error {
public:
    using Error::Error;
};

/// A value outside its admissible domain, naming the offender.
class RangeError : public Error {
public:
    using Error::Error;
};

/// Out-of-bounds indexing.
class IndexError : public Error {
public:
    using Error::Error;
};

/// Malformed or unusable input data (too-short audio, negative NMF input, ...).
class InputError : public Error {
public:
    using Error::Error;
};

/// Inconsistent or infeasible configuration (dimension mismatches, bad keys, ...).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Corrupt, truncated, or version-mismatched file contents.
class FormatError : public Error {
public:
    using Error::Error;
};

/// Non-finite values where finite arithmetic was required.
class NumericalError : public Error {
public:
    using Error::Error;
};

/// A pipeline stage invoked before its prerequisites exist.
class DependencyError : public Error {
public:
    using Error::Error;
};

} // namespace dtb
