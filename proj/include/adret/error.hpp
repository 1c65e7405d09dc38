#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace adret {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid generator or pipeline configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Malformed input text. `line()` is 1-based, 0 when not tied to a line.
class ParseError : public Error {
public:
    ParseError(std::size_t line, const std::string& what)
        : Error(line == 0 ? what : "line " + std::to_string(line) + ": " + what)
        , line_(line)
    {
    }

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
public:
    using Error::Error;
};

/// Artifacts that do not belong together (dictionary, network or hash mismatch).
class IntegrityError : public Error {
public:
    using Error::Error;
};

/// Input data violating a documented precondition.
class DataError : public Error {
public:
    using Error::Error;
};

class TrainingError : public Error {
public:
    using Error::Error;
};

/// Binary index file could not be loaded; no partial index is produced.
class LoadError : public Error {
public:
    using Error::Error;
};

/// Unrecognized magic bytes or format version.
class VersionError : public LoadError {
public:
    using LoadError::LoadError;
};

}  // namespace adret
