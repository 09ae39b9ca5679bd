#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace helmsman {

enum class ErrorCode {
  kInvalidArgument,
  kInvalidState,
  kValidation,
  // Transport failures (timeouts, refused connections) that a caller may retry.
  kTransport,
  kBackendFailure,
  kProtocol,
  kCaptionUnavailable,
  kReasoningFailed,
  kMetricUnavailable,
  kNotFound,
  kIo,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

  // HTTP status of the last backend response, 0 when none was received.
  int status() const noexcept { return status_; }
  Error& with_status(int status) {
    status_ = status;
    return *this;
  }

  // Backend role that failed ("reasoner", "embedder", ...), empty if unknown.
  const std::string& role() const noexcept { return role_; }
  Error& with_role(std::string role) {
    role_ = std::move(role);
    return *this;
  }

  // Pipeline branch the error surfaced in, empty outside dispatch.
  const std::string& branch() const noexcept { return branch_; }
  Error& with_branch(std::string branch) {
    branch_ = std::move(branch);
    return *this;
  }

 private:
  ErrorCode code_;
  int status_ = 0;
  std::string role_;
  std::string branch_;
};

[[noreturn]] void throw_error(ErrorCode code, const std::string& message);

}  // namespace helmsman
