#pragma once

#include <stdexcept>
#include <string>

namespace segmarket {

// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input file. Carries the 1-based line number when known (0 otherwise).
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class ArgumentError : public Error {
 public:
  using Error::Error;
};

// Input is well formed but cannot support the requested structure
// (empty usable graph, no admissible trip pair, ...).
class StructuralError : public Error {
 public:
  using Error::Error;
};

// Evaluation requested outside the domain a model was fitted on.
class DomainError : public Error {
 public:
  using Error::Error;
};

// No multi-start run of a nonlinear fit converged.
class FitFailure : public Error {
 public:
  FitFailure(const std::string& what, std::string diagnostics)
      : Error(what), diagnostics_(std::move(diagnostics)) {}
  const std::string& diagnostics() const noexcept { return diagnostics_; }

 private:
  std::string diagnostics_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace segmarket
