#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace pcad {

// Precondition violated by a caller-supplied argument.
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Operation called on an object that is not in the required state
// (missing normals, mismatched checkpoints, ...).
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Non-finite or otherwise unusable numeric input.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class EmptyCloudError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed text record. `line` is 1-based; 0 if unknown.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : std::runtime_error(what + " (line " + std::to_string(line) + ")"), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// Metric requested on data for which it is not defined (e.g. one class only).
class UndefinedMetricError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace pcad
