#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace uplift {

// Root of all library errors. Subclasses map onto the CLI exit-code contract:
// ConfigError -> 2, DataError family -> 3, ModelError family -> 4.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class SchemaError : public DataError {
 public:
  explicit SchemaError(const std::string& column)
      : DataError("unknown column '" + column + "'"), column_(column) {}
  SchemaError(const std::string& column, const std::string& message)
      : DataError(message), column_(column) {}
  const std::string& column() const noexcept { return column_; }

 private:
  std::string column_;
};

// Row numbers are 1-based data rows (the header is not counted).
class ParseError : public DataError {
 public:
  ParseError(std::size_t row, const std::string& column, const std::string& text)
      : DataError("row " + std::to_string(row) + ", column " + column +
                  ": cannot parse '" + text + "' as a number"),
        row_(row),
        column_(column) {}
  std::size_t row() const noexcept { return row_; }
  const std::string& column() const noexcept { return column_; }

 private:
  std::size_t row_;
  std::string column_;
};

class ValidationError : public DataError {
 public:
  using DataError::DataError;
};

class DomainError : public DataError {
 public:
  using DataError::DataError;
};

class ModelError : public Error {
 public:
  using Error::Error;
};

class UnsupportedModelError : public ModelError {
 public:
  using ModelError::ModelError;
};

class ImmutabilityError : public Error {
 public:
  using Error::Error;
};

class FilterParseError : public Error {
 public:
  using Error::Error;
};

}  // namespace uplift
