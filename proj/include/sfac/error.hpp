#pragma once

#include <stdexcept>
#include <string>

namespace sfac {

// Base class for all library errors. The CLI maps these to exit code 2.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Shape or dimension contract violation.
struct ShapeError : Error {
    using Error::Error;
};

// Malformed, truncated, or unsupported file contents.
struct FormatError : Error {
    using Error::Error;
};

// Invalid argument value (range, divisibility, mode).
struct ValueError : Error {
    using Error::Error;
};

}  // namespace sfac
