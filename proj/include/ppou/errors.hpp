#pragma once

#include <stdexcept>
#include <string>

namespace ppou {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Shapes that do not fit together (non-square, wrong column count, ...).
class DimensionError : public Error {
  public:
    using Error::Error;
};

/// Iteration caps exceeded, non-finite values produced during training.
class NumericalError : public Error {
  public:
    using Error::Error;
};

/// Bad data handed to an operation (empty, non-finite coordinates).
class InputError : public Error {
  public:
    using Error::Error;
};

/// API misuse: mismatched caches, wrong partition counts.
class UsageError : public Error {
  public:
    using Error::Error;
};

/// Malformed file contents. Carries the offending line when known.
class ParseError : public Error {
  public:
    ParseError(const std::string& what, long line = -1)
        : Error(line >= 0 ? what + " (line " + std::to_string(line) + ")" : what), line_(line) {}

    long line() const noexcept { return line_; }

  private:
    long line_;
};

class IoError : public Error {
  public:
    using Error::Error;
};

}  // namespace ppou
