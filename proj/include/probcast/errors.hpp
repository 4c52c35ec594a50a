#pragma once

#include <stdexcept>
#include <string>

namespace probcast {

// Error taxonomy shared across the library. Everything derives from
// std::runtime_error so callers can catch coarsely at the CLI boundary.

struct ParseError : std::runtime_error {
    explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
};

struct EmptyInput : std::runtime_error {
    explicit EmptyInput(const std::string& msg) : std::runtime_error(msg) {}
};

struct TooShort : std::runtime_error {
    explicit TooShort(const std::string& msg) : std::runtime_error(msg) {}
};

struct ShapeMismatch : std::runtime_error {
    explicit ShapeMismatch(const std::string& msg) : std::runtime_error(msg) {}
};

struct InvalidSpec : std::runtime_error {
    explicit InvalidSpec(const std::string& msg) : std::runtime_error(msg) {}
};

struct DomainError : std::runtime_error {
    explicit DomainError(const std::string& msg) : std::runtime_error(msg) {}
};

struct BadSampleCount : std::runtime_error {
    explicit BadSampleCount(const std::string& msg) : std::runtime_error(msg) {}
};

struct Diverged : std::runtime_error {
    explicit Diverged(const std::string& msg) : std::runtime_error(msg) {}
};

struct InvalidSpace : std::runtime_error {
    explicit InvalidSpace(const std::string& msg) : std::runtime_error(msg) {}
};

struct CheckpointMismatch : std::runtime_error {
    explicit CheckpointMismatch(const std::string& msg) : std::runtime_error(msg) {}
};

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

struct LockError : std::runtime_error {
    explicit LockError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace probcast
