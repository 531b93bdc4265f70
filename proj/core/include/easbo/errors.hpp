#pragma once

#include <stdexcept>
#include <string>

namespace easbo {

/// Base class of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input file or record.
class ParseError : public Error {
public:
    using Error::Error;
};

/// Input parsed but violates a structural invariant (degenerate element,
/// out-of-range index, disconnected mesh, bad fiber).
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Caller broke an operation precondition.
class PreconditionError : public Error {
public:
    using Error::Error;
};

/// A numerical routine failed (non-convergence, factorization failure).
class ComputeError : public Error {
public:
    using Error::Error;
};

}  // namespace easbo
