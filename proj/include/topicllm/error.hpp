#pragma once

#include <stdexcept>
#include <string>

namespace topicllm {

/// Failure categories. The CLI maps each one onto a process exit code.
enum class ErrorKind {
  kInvalidInput,   // malformed records, bad arguments, broken invariants
  kInvalidConfig,  // config values out of range
  kMissingInput,   // a required file does not exist
  kBackend,        // chat or embedding provider failure
  kValidation,     // a verification step (gradcheck, eval) failed
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Raised by chat/embedding backends. `fatal` marks failures that make the
/// remaining requests pointless (bad credentials, unreachable endpoint).
class BackendError : public Error {
 public:
  BackendError(const std::string& what, int status = 0, bool fatal = false)
      : Error(ErrorKind::kBackend, what), status_(status), fatal_(fatal) {}

  int status() const noexcept { return status_; }
  bool fatal() const noexcept { return fatal_; }

 private:
  int status_;
  bool fatal_;
};

inline Error invalid_input(const std::string& what) {
  return Error(ErrorKind::kInvalidInput, what);
}

inline Error missing_input(const std::string& what) {
  return Error(ErrorKind::kMissingInput, what);
}

}  // namespace topicllm
