#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace bidomain {

class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Malformed text input. `line` is 1-based; 0 when not tied to a line.
class ParseError : public Error {
public:
  ParseError(std::size_t line, const std::string& what)
      : Error(line > 0 ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}

  std::size_t line() const { return line_; }

private:
  std::size_t line_;
};

/// Well-formed input that violates a model or mesh invariant.
class ValidationError : public Error {
public:
  using Error::Error;
};

class DimensionError : public Error {
public:
  using Error::Error;
};

/// Missing or unreadable file.
class IoError : public Error {
public:
  using Error::Error;
};

/// Linear or nonlinear solver failure.
class SolverError : public Error {
public:
  using Error::Error;
};

}  // namespace bidomain
