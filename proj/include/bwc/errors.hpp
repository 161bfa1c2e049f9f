#pragma once

#include <stdexcept>
#include <string>

namespace bwc {

/// Base for every error the library raises. `kind()` is a short stable tag
/// used in the CLI's machine-readable error output.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message)
      : std::runtime_error(message), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& message, long line)
      : Error("parse", message), line_(line) {}
  long line() const noexcept { return line_; }

 private:
  long line_;
};

class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& message) : Error("validation", message) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& message) : Error("io", message) {}
};

class PreconditionError : public Error {
 public:
  explicit PreconditionError(const std::string& message) : Error("precondition", message) {}
};

class InfeasibleError : public Error {
 public:
  explicit InfeasibleError(const std::string& message) : Error("infeasible", message) {}
};

}  // namespace bwc
