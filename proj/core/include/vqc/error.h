#pragma once

#include <stdexcept>
#include <string>

namespace vqc {

// Machine-readable failure categories. The CLI prints these verbatim in its
// one-line error output, so the spellings are part of the tool's interface.
enum class ErrorCode {
  kInvalidArgument,
  kParse,
  kDuplicate,
  kInfeasible,
  kIo,
  kNotFound,
  kConflict,
  kClient,
  kCapability,
  kNonConvergence,
  kDegenerate,
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace vqc
