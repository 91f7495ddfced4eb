#pragma once

#include <stdexcept>
#include <string>

namespace tppf {

enum class ErrorCode {
  invalid_argument = 1,
  degenerate = 2,
  numeric = 3,
  io = 4,
  config = 5,
  rejection_exhausted = 6,
  runtime = 7,
};

// Every failure raised by the library carries a code that the C API maps
// onto tppf_status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

inline void require(bool ok, const std::string& what) {
  if (!ok) fail(ErrorCode::invalid_argument, what);
}

}  // namespace tppf
