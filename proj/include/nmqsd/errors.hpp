#pragma once

#include <stdexcept>
#include <string>

namespace nmqsd {

// Root of every error raised by the library. The CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Invalid physical or numerical parameter (non-positive rate, bad grid, ...).
class ParameterError : public Error {
public:
    using Error::Error;
};

// Non-finite values or blow-up during an integration.
class DivergenceError : public Error {
public:
    using Error::Error;
};

// Zero-norm or collapsed state.
class DegenerateStateError : public Error {
public:
    using Error::Error;
};

// Covariance kernel that fails positive semidefiniteness.
class KernelError : public Error {
public:
    using Error::Error;
};

// Grids or array extents that do not line up.
class ShapeError : public Error {
public:
    using Error::Error;
};

// Argument outside the domain where a quantity is defined.
class DomainError : public Error {
public:
    using Error::Error;
};

// Operation called on an object that lacks the data it needs.
class StateError : public Error {
public:
    using Error::Error;
};

// Configuration file or flag errors. Messages always name the offending field.
class ConfigError : public Error {
public:
    using Error::Error;
};

} // namespace nmqsd
