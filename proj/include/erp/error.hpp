#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace erp {

enum class ErrorCode {
  io,
  bad_magic,
  bad_version,
  truncated,
  non_finite,
  invariant,
  dimension,
  malformed,
  not_monotone,
  label_domain,
  unknown_channel,
  rate_mismatch,
  out_of_range,
  single_class,
  zero_variance,
  stale_cache,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::io: return "io";
    case ErrorCode::bad_magic: return "bad-magic";
    case ErrorCode::bad_version: return "bad-version";
    case ErrorCode::truncated: return "truncated";
    case ErrorCode::non_finite: return "non-finite";
    case ErrorCode::invariant: return "invariant";
    case ErrorCode::dimension: return "dimension";
    case ErrorCode::malformed: return "malformed";
    case ErrorCode::not_monotone: return "not-monotone";
    case ErrorCode::label_domain: return "label-domain";
    case ErrorCode::unknown_channel: return "unknown-channel";
    case ErrorCode::rate_mismatch: return "rate-mismatch";
    case ErrorCode::out_of_range: return "out-of-range";
    case ErrorCode::single_class: return "single-class";
    case ErrorCode::zero_variance: return "zero-variance";
    case ErrorCode::stale_cache: return "stale-cache";
  }
  return "unknown";
}

// Every failure raised by the library carries a machine-checkable code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline void require(bool condition, ErrorCode code, const std::string& what) {
  if (!condition) throw Error(code, what);
}

}  // namespace erp
