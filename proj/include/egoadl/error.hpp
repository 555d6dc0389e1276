#pragma once

#include <stdexcept>
#include <string>

namespace egoadl {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A file could not be read, or a frame in a sequence is missing/corrupt.
class LoadError : public Error {
public:
    using Error::Error;
};

/// Well-formed input whose structure does not fit (dimension mismatch, bad header).
class FormatError : public Error {
public:
    using Error::Error;
};

/// Input violates a domain invariant (overlapping labels, unknown activity, ...).
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Robust motion fit could not be computed (too few vectors, collinear centers).
class EstimationError : public Error {
public:
    using Error::Error;
};

/// Non-finite values or probability underflow.
class NumericError : public Error {
public:
    using Error::Error;
};

/// Not enough observations to initialize or train a model.
class InsufficientDataError : public Error {
public:
    using Error::Error;
};

class ParseError : public Error {
public:
    using Error::Error;
};

class VersionError : public Error {
public:
    using Error::Error;
};

}  // namespace egoadl
