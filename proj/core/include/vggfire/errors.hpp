#pragma once

#include <stdexcept>
#include <string>

namespace vggfire {

// Base of every error raised by the library. Subclasses name the failure
// category; the CLI maps categories to exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Tensor shapes or dimensions do not agree with an operation's contract.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Invalid model, optimizer, or run configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// A layer or object was used in the wrong state (e.g. backward before forward).
class StateError : public Error {
public:
    using Error::Error;
};

/// Checkpoint contents do not match the expected architecture.
class IntegrityError : public Error {
public:
    using Error::Error;
};

/// Malformed or truncated binary file.
class FormatError : public Error {
public:
    using Error::Error;
};

/// Image payload could not be decoded.
class DecodeError : public Error {
public:
    using Error::Error;
};

/// Dataset directory layout problems.
class DatasetError : public Error {
public:
    using Error::Error;
};

/// Caller-supplied values outside an operation's domain.
class InputError : public Error {
public:
    using Error::Error;
};

/// Non-finite values encountered during training.
class NumericalError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

} // namespace vggfire
