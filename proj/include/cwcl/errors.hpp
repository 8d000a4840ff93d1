#pragma once

#include <stdexcept>
#include <string>

namespace cwcl {

/// Bad caller input: shape mismatches, invalid configs, malformed files.
class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Numerical breakdown at runtime: non-finite loss, failed gradient check.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Filesystem-level failures (open/read/write).
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace cwcl
