#pragma once

#include <stdexcept>
#include <string>

namespace marrowbench {

// Process exit codes double as error categories so that scripted callers can
// branch on the failure class alone.
enum class ErrorCode : int {
  usage = 2,
  io = 3,
  schema = 4,
  precondition = 5,
  internal = 6,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string stage, const std::string& msg)
      : std::runtime_error(msg), code(code), stage(std::move(stage)) {}

  ErrorCode code;
  std::string stage;
};

inline const char* error_code_name(ErrorCode c) {
  switch (c) {
    case ErrorCode::usage: return "usage";
    case ErrorCode::io: return "io";
    case ErrorCode::schema: return "schema";
    case ErrorCode::precondition: return "precondition";
    case ErrorCode::internal: return "internal";
  }
  return "internal";
}

}  // namespace marrowbench
