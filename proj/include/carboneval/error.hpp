// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace carboneval {

enum class ErrorCode {
  kInvalidArgument,
  kDomain,
  kRange,
  kUnknownDevice,
  kUnknownRegion,
  kParse,
  kIo,
  kConvergence,
  kRankDeficient,
};

// Single exception type for the library; the code drives C API status and
// CLI exit codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void Fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace carboneval
