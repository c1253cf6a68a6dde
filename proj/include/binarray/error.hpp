#pragma once

#include <stdexcept>
#include <string>

namespace binarray {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed arguments: empty tensors, dimension mismatches, non-finite values.
class InvalidInput : public Error {
 public:
  using Error::Error;
};

/// Accelerator or layer configuration that the hardware cannot execute.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Corrupt or unreadable files.
class FormatError : public Error {
 public:
  using Error::Error;
};

class CompileError : public Error {
 public:
  using Error::Error;
};

class AssembleError : public Error {
 public:
  AssembleError(int line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  int line() const noexcept { return line_; }

 private:
  int line_;
};

}  // namespace binarray
