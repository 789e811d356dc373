#pragma once

#include <stdexcept>
#include <string>

namespace clipxfer {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Instruction text outside the supported grammar.
class ParseError : public Error {
public:
    using Error::Error;
};

/// Operation called in a state that forbids it (e.g. stepping a finished episode).
class UsageError : public Error {
public:
    using Error::Error;
};

/// Text that cannot be embedded (empty or whitespace-only).
class EncodeError : public Error {
public:
    using Error::Error;
};

class NumericError : public Error {
public:
    using Error::Error;
};

/// Vector or matrix dimensions that do not line up.
class ShapeError : public Error {
public:
    using Error::Error;
};

class ParameterError : public Error {
public:
    using Error::Error;
};

/// Malformed policy, model, embedding or config file. Messages carry the line number.
class FormatError : public Error {
public:
    using Error::Error;
};

class LookupError : public Error {
public:
    using Error::Error;
};

/// A base policy failed to reach the convergence threshold.
class ConvergenceError : public Error {
public:
    using Error::Error;
};

}  // namespace clipxfer
