#pragma once

#include <stdexcept>
#include <string>

namespace lact {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incompatible tensor/matrix shapes or geometry.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Invalid argument value (bad config, non-binary image, ...).
class ValueError : public Error {
 public:
  using Error::Error;
};

/// A NaN or Inf showed up where finite numbers are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Malformed input file. Carries the 1-based line number when known (0 otherwise).
class ParseError : public Error {
 public:
  ParseError(const std::string& path, std::size_t line, const std::string& what)
      : Error(path + (line ? ":" + std::to_string(line) : std::string()) + ": " + what),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace lact
