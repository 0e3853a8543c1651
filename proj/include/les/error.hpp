#pragma once

#include <stdexcept>
#include <string>

namespace les {

// Bad input from the user: malformed files, invalid configuration, unknown species.
class UserError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ParseError : public UserError {
public:
    ParseError(const std::string& message, std::size_t line)
        : UserError("line " + std::to_string(line) + ": " + message), line_(line) {}

    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

// Numerical failure during a run (divergence, non-finite forces, instability).
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// An MD atom moving faster than the configured speed limit.
class InstabilityError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

} // namespace les
