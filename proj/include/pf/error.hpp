#pragma once

#include <stdexcept>
#include <string>

namespace pf {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Caller supplied something outside an operation's domain.
struct InvalidInput : Error {
  using Error::Error;
};

struct ShapeError : Error {
  using Error::Error;
};

// A text format could not be parsed; `line` is 1-based, 0 when unknown.
struct ParseError : Error {
  ParseError(const std::string& what, std::size_t line)
      : Error(line ? "line " + std::to_string(line) + ": " + what : what), line(line) {}
  std::size_t line;
};

struct IoError : Error {
  using Error::Error;
};

struct TrainingDiverged : Error {
  using Error::Error;
};

}  // namespace pf
