#pragma once

#include <stdexcept>
#include <string>

namespace icpvi {

/// Base class for all errors raised by this library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// A file could not be read or parsed (bad JSONL/CSV, missing columns, ...).
class LoadError : public Error {
public:
    using Error::Error;
};

/// Inputs violate a documented precondition or invariant.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// A configuration document is malformed or inconsistent.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// The backend could not report the target token's log-probability
/// (absent from top-k and echo scoring unavailable, or no table entry).
class MissingTargetLogprob : public Error {
public:
    using Error::Error;
};

/// Transport-level backend failure after exhausting retries.
class BackendUnavailable : public Error {
public:
    using Error::Error;
};

/// Pearson correlation is undefined (a constant input vector).
class UndefinedCorrelation : public Error {
public:
    using Error::Error;
};

} // namespace icpvi
