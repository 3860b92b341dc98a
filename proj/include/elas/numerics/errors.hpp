#pragma once

#include <stdexcept>
#include <string>

namespace elas {

/// Root of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand dimensions do not satisfy an operation's precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// A tensor shape is unusable for an operation (e.g. width not a multiple of 4).
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// An iterative routine failed to converge, or non-finite values appeared.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// A dense matrix violates the 2:4 pattern.
class PatternError : public Error {
 public:
  PatternError(std::size_t row, std::size_t group, const std::string& what)
      : Error(what), row_(row), group_(group) {}

  std::size_t row() const noexcept { return row_; }
  std::size_t group() const noexcept { return group_; }

 private:
  std::size_t row_;
  std::size_t group_;
};

/// Malformed serialized or packed data.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Invalid or incomplete configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// File system failures.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace elas
