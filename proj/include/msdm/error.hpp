#pragma once

#include <stdexcept>
#include <string>

namespace msdm {

// Base of every error thrown by the library. Subclasses let callers (and the
// CLI exit-code mapping) distinguish bad arguments from bad data.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Rectangle, index or band outside the valid range.
class BoundsError : public Error {
public:
    using Error::Error;
};

// Tensor or cube dimensions that do not line up.
class ShapeError : public Error {
public:
    using Error::Error;
};

// Inconsistent configuration (pattern vs. cube, network config, plan).
class ConfigError : public Error {
public:
    using Error::Error;
};

// A filter-array pattern that leaves some pixel without any sample in reach.
class DegeneratePatternError : public Error {
public:
    using Error::Error;
};

// Malformed or unsupported file contents.
class FormatError : public Error {
public:
    using Error::Error;
};

} // namespace msdm
