#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fer {

class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Malformed FER CSV input. `row()` is the 1-based data-row number (header excluded),
/// or 0 when the error is not tied to a row.
class ParseError : public Error {
public:
  ParseError(const std::string& what, std::size_t row)
      : Error(row ? "row " + std::to_string(row) + ": " + what : what), row_(row) {}
  std::size_t row() const noexcept { return row_; }

private:
  std::size_t row_;
};

class LabelRangeError : public ParseError {
public:
  using ParseError::ParseError;
};

class PartitionError : public ParseError {
public:
  using ParseError::ParseError;
};

class UnsplittableClassError : public Error {
public:
  using Error::Error;
};

class DegenerateTransformError : public Error {
public:
  using Error::Error;
};

class InvalidTargetError : public Error {
public:
  using Error::Error;
};

class DomainError : public Error {
public:
  using Error::Error;
};

class EmptyClassError : public Error {
public:
  using Error::Error;
};

class DimensionError : public Error {
public:
  using Error::Error;
};

class CapabilityError : public Error {
public:
  using Error::Error;
};

class AdapterUnavailableError : public Error {
public:
  using Error::Error;
};

class InputError : public Error {
public:
  using Error::Error;
};

class ConfigError : public Error {
public:
  using Error::Error;
};

} // namespace fer
