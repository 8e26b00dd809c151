#pragma once

#include <stdexcept>
#include <string>

namespace chartvec {

/// Failure categories shared by the C++ core and the C API status codes.
enum class ErrorCode {
  invalid_argument = 1,
  io = 2,
  parse = 3,
  validation = 4,
  shape = 5,
  version = 6,
  diverged = 7,
  not_found = 8,
  domain = 9,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace chartvec
