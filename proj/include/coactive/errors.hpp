#pragma once

#include <stdexcept>
#include <string>

namespace coactive {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed document; message names the offending field.
class ParseError : public Error {
public:
    using Error::Error;
};

/// A parsed value violates a domain invariant.
class InvariantError : public Error {
public:
    using Error::Error;
};

/// An id does not resolve.
class ReferenceError : public Error {
public:
    using Error::Error;
};

/// Joint vector outside the arm's limits.
class DomainError : public Error {
public:
    using Error::Error;
};

/// Caller broke a precondition (dimension mismatch, empty input, missing label).
class ContractError : public Error {
public:
    using Error::Error;
};

class PlannerError : public Error {
public:
    PlannerError(const std::string& what, int sample_index)
        : Error(what), sample_index_(sample_index) {}
    int sample_index() const { return sample_index_; }

private:
    int sample_index_;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class TrainingError : public Error {
public:
    using Error::Error;
};

}  // namespace coactive
