#pragma once

#include <stdexcept>
#include <string>

namespace psim {

/// Broad failure category. The CLI maps these onto exit codes.
enum class ErrorKind {
  kArgument,  // caller passed an out-of-range parameter
  kData,      // malformed or invariant-violating input data
  kNumeric,   // non-finite value or failed numeric check
  kTimeout,   // search exceeded its time budget
};

/// Base class of every exception thrown by the library. `module()` names the
/// component that raised it so front ends can report provenance.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string module, const std::string& what);

  ErrorKind kind() const noexcept { return kind_; }
  const std::string& module() const noexcept { return module_; }

 private:
  ErrorKind kind_;
  std::string module_;
};

class ArgumentError : public Error {
 public:
  ArgumentError(std::string module, const std::string& what)
      : Error(ErrorKind::kArgument, std::move(module), what) {}
};

class DataError : public Error {
 public:
  DataError(std::string module, const std::string& what)
      : Error(ErrorKind::kData, std::move(module), what) {}
};

class NumericError : public Error {
 public:
  NumericError(std::string module, const std::string& what)
      : Error(ErrorKind::kNumeric, std::move(module), what) {}
};

class TimeoutError : public Error {
 public:
  TimeoutError(std::string module, const std::string& what)
      : Error(ErrorKind::kTimeout, std::move(module), what) {}
};

const char* to_string(ErrorKind kind) noexcept;

}  // namespace psim
