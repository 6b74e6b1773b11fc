#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace spwood {

/// Input violates an operation's precondition (domain, arity, shape).
class InvalidInput : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Input is well-formed but carries no usable structure (constant scores,
/// zero-area quadrilateral, no planted positives).
class DegenerateInput : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Linear algebra broke down (non-PSD matrix, collapsed covariance).
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed text input; carries the 1-based line number.
class ParseError : public std::runtime_error {
public:
    ParseError(std::size_t line, const std::string& what)
        : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

}  // namespace spwood
