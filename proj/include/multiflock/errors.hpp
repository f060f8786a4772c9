#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace multiflock {

/// Invalid simulation, model or training configuration.
class ConfigError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Text input that does not follow the expected grammar. Line and column are 1-based.
class ParseError : public std::runtime_error {
public:
  ParseError(const std::string& message, std::size_t line, std::size_t column)
      : std::runtime_error("line " + std::to_string(line) + ", column " + std::to_string(column) +
                           ": " + message),
        line_(line),
        column_(column) {}

  std::size_t line() const { return line_; }
  std::size_t column() const { return column_; }

private:
  std::size_t line_;
  std::size_t column_;
};

/// Binary container (dataset or checkpoint) that cannot be read back.
class FormatError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Shape mismatch between tensor operands.
class ShapeError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// A tensor operation produced NaN or Inf.
class NumericError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

}  // namespace multiflock
