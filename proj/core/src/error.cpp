#include "psim/error.hpp"

namespace psim {

Error::Error(ErrorKind kind, std::string module, const std::string& what)
    : std::runtime_error(what), kind_(kind), module_(std::move(module)) {}

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::kArgument:
      return "argument";
    case ErrorKind::kData:
      return "data";
    case ErrorKind::kNumeric:
      return "numeric";
    case ErrorKind::kTimeout:
      return "timeout";
  }
  return "unknown";
}

}  // namespace psim
