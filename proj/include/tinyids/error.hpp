#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace tinyids {

// Categories double as the CLI exit codes.
enum class ErrorKind : int {
  usage = 1,
  data = 2,
  format = 3,
  network = 4,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// Bad argument values (fractions out of range, invalid architecture, ...).
class ArgumentError : public Error {
 public:
  explicit ArgumentError(const std::string& what) : Error(ErrorKind::usage, what) {}
};

// Input data problems: missing columns, unknown labels, dimension mismatches.
class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ErrorKind::data, what) {}
};

class SchemaError : public DataError {
 public:
  explicit SchemaError(const std::string& what) : DataError(what) {}
};

// Malformed binary artifacts. Carries the byte offset where decoding failed.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : Error(ErrorKind::format, what + " (at offset " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

class NetworkError : public Error {
 public:
  explicit NetworkError(const std::string& what) : Error(ErrorKind::network, what) {}
};

}  // namespace tinyids
