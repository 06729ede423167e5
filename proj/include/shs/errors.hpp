#pragma once

#include <stdexcept>
#include <string>

namespace shs {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Input rejected: malformed file, bad argument, or a violated model invariant.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Structured-text parse failure; carries the offending line number.
class ParseError : public ValidationError {
public:
    ParseError(const std::string& what, int line)
        : ValidationError(what + " (line " + std::to_string(line) + ")"), line_(line) {}

    [[nodiscard]] int line() const { return line_; }

private:
    int line_;
};

/// A numerical routine could not produce a usable result.
class NumericalError : public Error {
public:
    using Error::Error;
};

} // namespace shs
