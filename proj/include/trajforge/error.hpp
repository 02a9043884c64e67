#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace trajforge {

/// Base for every error raised by the library. `code()` is the stable,
/// machine-readable identifier the CLI and service put on the wire.
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& message)
        : std::runtime_error(message), code_(std::move(code)) {}

    const std::string& code() const noexcept { return code_; }

private:
    std::string code_;
};

/// Tensor extents do not line up.
class DimensionError : public Error {
public:
    explicit DimensionError(const std::string& message) : Error("E_DIM", message) {}
};

/// Input is well-formed but outside the operation's domain (empty mask, unknown id, ...).
class DomainError : public Error {
public:
    explicit DomainError(const std::string& message) : Error("E_DOMAIN", message) {}
};

/// A file or payload could not be read or parsed.
class InputError : public Error {
public:
    explicit InputError(const std::string& message) : Error("E_INPUT", message) {}
};

/// Optimization diverged.
class TrainingError : public Error {
public:
    explicit TrainingError(const std::string& message) : Error("E_TRAIN", message) {}
};

}  // namespace trajforge
