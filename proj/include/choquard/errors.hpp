#pragma once

#include <stdexcept>
#include <string>

namespace choquard {

// Invalid grid, parameter, or config input. CLI maps this to exit 2.
struct InvalidInputError : std::runtime_error {
    explicit InvalidInputError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ConfigError : InvalidInputError {
    explicit ConfigError(const std::string& msg) : InvalidInputError(msg) {}
};

struct FileFormatError : InvalidInputError {
    explicit FileFormatError(const std::string& msg) : InvalidInputError(msg) {}
};

struct SizeGuardError : InvalidInputError {
    explicit SizeGuardError(const std::string& msg) : InvalidInputError(msg) {}
};

struct NonNormalizableError : InvalidInputError {
    explicit NonNormalizableError(const std::string& msg) : InvalidInputError(msg) {}
};

// Non-finite values appeared mid-iteration. CLI maps this to exit 3.
struct NumericAbortError : std::runtime_error {
    explicit NumericAbortError(const std::string& msg) : std::runtime_error(msg) {}
};

}
