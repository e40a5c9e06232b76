#pragma once

#include <stdexcept>
#include <string>

namespace cpla {

// Error categories map one-to-one onto CLI exit codes (see tools/cpla.cpp).

/// Bad input: malformed files, inconsistent cases, invalid configuration.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Syntax error in a text input, carrying the 1-based line number.
class ParseError : public ValidationError {
 public:
  ParseError(int line, const std::string& what)
      : ValidationError("line " + std::to_string(line) + ": " + what), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

/// Numerical failure: singular matrices, LP infeasibility, too many
/// non-converged power flows.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace cpla
