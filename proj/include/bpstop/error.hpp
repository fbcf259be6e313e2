#pragma once

#include <stdexcept>
#include <string>

namespace bpstop {

// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed model file (JSON syntax, missing or mistyped field).
class ParseError : public Error {
public:
    ParseError(const std::string& what, int line = 0, int column = 0)
        : Error(line > 0 ? "line " + std::to_string(line) + ", column " + std::to_string(column) + ": " + what
                         : what),
          line_(line),
          column_(column) {}

    int line() const noexcept { return line_; }
    int column() const noexcept { return column_; }

private:
    int line_;
    int column_;
};

// Well-formed input that violates a model invariant.
class ValidationError : public Error {
public:
    using Error::Error;
};

// Operation called outside its domain (start state inside S, s outside the cube, ...).
class PreconditionError : public Error {
public:
    using Error::Error;
};

// Requested state space exceeds the configured limit.
class CapacityError : public Error {
public:
    using Error::Error;
};

// Iterative method did not converge, or a fit was rank deficient.
class NumericalError : public Error {
public:
    using Error::Error;
};

}  // namespace bpstop
