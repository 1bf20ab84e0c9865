#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace intentscale {

/// Machine-readable failure category. The service layer maps these onto
/// HTTP status codes and `error.code` fields.
enum class ErrorCode {
  invalid_argument,
  not_found,
  already_exists,
  shape_mismatch,
  fingerprint_mismatch,
  io_error,
  parse_error,
  numerical_error,
};

std::string_view to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace intentscale
