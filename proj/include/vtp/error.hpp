#pragma once

#include <stdexcept>
#include <string>

namespace vtp {

/// Base class for every domain failure raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised when input text or documents cannot be parsed.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t line = 0)
        : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Invalid configuration or arguments supplied by the caller.
class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace vtp
