#include "helmsman/error.hpp"

namespace helmsman {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid-argument";
    case ErrorCode::kInvalidState: return "invalid-state";
    case ErrorCode::kValidation: return "validation";
    case ErrorCode::kTransport: return "retryable-transport";
    case ErrorCode::kBackendFailure: return "backend-failure";
    case ErrorCode::kProtocol: return "protocol";
    case ErrorCode::kCaptionUnavailable: return "caption-unavailable";
    case ErrorCode::kReasoningFailed: return "reasoning-failed";
    case ErrorCode::kMetricUnavailable: return "metric-unavailable";
    case ErrorCode::kNotFound: return "not-found";
    case ErrorCode::kIo: return "io";
  }
  return "unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(message), code_(code) {}

void throw_error(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace helmsman
