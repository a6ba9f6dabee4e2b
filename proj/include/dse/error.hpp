#pragma once

#include <stdexcept>
#include <string>

namespace dse {

// Base class for all library errors. CLI maps these to exit code 2.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed file contents (bad magic, bad version, schema violation).
struct FormatError : Error {
    using Error::Error;
};

// OS-level read/write failure or truncated payload.
struct IoError : Error {
    using Error::Error;
};

// Operation applied to a tile of the wrong kind.
struct KindError : Error {
    using Error::Error;
};

// Dimension / channel mismatch.
struct ShapeError : Error {
    using Error::Error;
};

// Invalid configuration value.
struct ConfigError : Error {
    using Error::Error;
};

// Invalid call argument (bad index, bad range).
struct ArgumentError : Error {
    using Error::Error;
};

// Input outside the mathematical domain of an operation.
struct DomainError : Error {
    using Error::Error;
};

// Training diverged or produced non-finite loss.
struct TrainingError : Error {
    using Error::Error;
};

// Non-finite values encountered during numeric iteration.
struct NumericalError : Error {
    using Error::Error;
};

// Procedural generation could not satisfy its constraints.
struct GenerationError : Error {
    using Error::Error;
};

}  // namespace dse
