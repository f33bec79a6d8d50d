#pragma once

#include <stdexcept>
#include <string>

namespace harmflow {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A file could not be opened or read/written at the OS level.
class IoError : public Error {
public:
    using Error::Error;
};

/// Input was readable but does not conform to the expected format.
class ParseError : public Error {
public:
    using Error::Error;
};

/// A model violates a structural invariant (dangling reference, cycle, ...).
class ValidationError : public Error {
public:
    using Error::Error;
};

/// A query named an unknown element or asked for an undefined quantity.
class QueryError : public Error {
public:
    using Error::Error;
};

/// A numerical solve failed (non-convergence, singular system).
class SolveError : public Error {
public:
    explicit SolveError(const std::string& what, double mismatch = 0.0)
        : Error(what), last_mismatch(mismatch) {}

    /// Last observed per-unit voltage mismatch for convergence failures.
    double last_mismatch;
};

} // namespace harmflow
