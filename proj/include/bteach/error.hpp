#pragma once

#include <stdexcept>
#include <string>

namespace bteach {

// Error categories. These map one-to-one onto the status codes of the C API.
enum class ErrorCode {
  InvalidArgument = 1,
  Io = 2,
  Format = 3,
  Numeric = 4,
  NoQualifyingCandidate = 5,
  AllMasksRejected = 6,
  State = 7,
  Classifier = 8,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Raised by select_examples when no candidate satisfies the policy predicate.
// nearest() is the achievable f_L closest to the qualifying region.
class NoQualifyingCandidate : public Error {
 public:
  NoQualifyingCandidate(const std::string& what, double nearest)
      : Error(ErrorCode::NoQualifyingCandidate, what), nearest_(nearest) {}
  double nearest() const noexcept { return nearest_; }

 private:
  double nearest_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

}  // namespace bteach
