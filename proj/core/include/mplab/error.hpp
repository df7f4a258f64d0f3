#pragma once

#include <stdexcept>
#include <string>

namespace mplab {

/// Invalid shapes, arguments or configuration values. Maps to CLI exit code 1.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file. The message names the file and the byte offset.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& file, std::size_t offset, const std::string& what)
      : std::runtime_error(file + ": byte " + std::to_string(offset) + ": " + what),
        file_(file),
        offset_(offset) {}

  const std::string& file() const noexcept { return file_; }
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::string file_;
  std::size_t offset_;
};

/// Well-formed input that violates a data invariant (e.g. a non-binary mask).
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// NaN/Inf produced during a forward or backward pass.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mplab
