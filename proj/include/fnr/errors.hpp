#pragma once

#include <stdexcept>
#include <string>

namespace fnr {

// Base class for all library errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor shape / dimension disagreement.
class ShapeError : public Error {
public:
    explicit ShapeError(const std::string& msg) : Error(msg) {}
};

// Config file parse problems (carries line numbers in the message).
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// File I/O and codec failures (corrupt PNG, truncated checkpoint, ...).
class IoError : public Error {
public:
    explicit IoError(const std::string& msg) : Error(msg) {}
};

// A requested computation exceeds a configured resource cap.
class ResourceError : public Error {
public:
    explicit ResourceError(const std::string& msg) : Error(msg) {}
};

// A stream ended before the expected payload was read.
class TruncatedError : public IoError {
public:
    explicit TruncatedError(const std::string& msg) : IoError(msg) {}
};

// Checkpoint format version or profile incompatibility.
class VersionError : public Error {
public:
    explicit VersionError(const std::string& msg) : Error(msg) {}
};

// Training aborted (non-finite loss and similar).
class TrainingError : public Error {
public:
    explicit TrainingError(const std::string& msg) : Error(msg) {}
};

} // namespace fnr
