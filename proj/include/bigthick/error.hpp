#pragma once

#include <stdexcept>
#include <string>

namespace bigthick {

enum class ErrorCode {
  InvalidArgument,
  NotFound,
  Conflict,      // illegal state transition or settled action
  Vocabulary,    // term outside a closed vocabulary
  Unauthorized,
  Io,
};

/// Exception carried across module boundaries; the service maps codes to
/// HTTP statuses.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "invalid_argument";
    case ErrorCode::NotFound: return "not_found";
    case ErrorCode::Conflict: return "conflict";
    case ErrorCode::Vocabulary: return "vocabulary";
    case ErrorCode::Unauthorized: return "unauthorized";
    case ErrorCode::Io: return "io";
  }
  return "unknown";
}

}  // namespace bigthick
