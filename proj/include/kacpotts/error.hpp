#ifndef KACPOTTS_ERROR_HPP
#define KACPOTTS_ERROR_HPP

#include <stdexcept>
#include <string>

namespace kacpotts {

/// Raised when an argument violates a documented precondition.
class InvalidArgument : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Two fields/profiles live on different grids.
class GridMismatch : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Exact enumeration would exceed the configured state cap.
class CapExceeded : public std::length_error {
public:
    using std::length_error::length_error;
};

/// A construction has no solution for the requested parameters.
class Infeasible : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// An experiment configuration does not match the published schema.
class SchemaError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) {
        throw InvalidArgument(msg);
    }
}

}

#endif
