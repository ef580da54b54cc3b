#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace kgx {

// Base class for operational failures surfaced to callers.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// Malformed input at a known line of a text source.
class InputError : public Error {
  public:
    InputError(std::size_t line, const std::string &message)
        : Error("line " + std::to_string(line) + ": " + message), line_(line) {}

    std::size_t line() const noexcept { return line_; }

  private:
    std::size_t line_;
};

class RuleParseError : public Error {
  public:
    using Error::Error;
};

} // namespace kgx
