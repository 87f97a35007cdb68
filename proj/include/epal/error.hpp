#pragma once

#include <stdexcept>
#include <string>

namespace epal {

// Arguments violate an operation's preconditions (shape, range, finiteness).
using InvalidArgument = std::invalid_argument;

// A linear-algebra or fitting routine could not produce a usable result.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Lookup of an id that does not exist.
class NotFoundError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Input outside the domain of a benchmark function.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, std::size_t byte_offset)
        : std::runtime_error(what + " (at byte " + std::to_string(byte_offset) + ")"),
          offset_(byte_offset) {}

    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

class UnsupportedVersionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Raised by an evaluation callback; the optimizer keeps its state so the run can resume.
class EvaluationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace epal
