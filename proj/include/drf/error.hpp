#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace drf {

enum class ErrorCode {
  invalid_input,
  missing_column,
  parse_error,
  rank_deficient,
  degenerate_fit,
  empty_subclass,
  singular,
  too_many_failures,
  io_error,
};

/// Every failure raised by the library carries a machine-readable code so
/// the CLI can emit a structured error record.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_input: return "invalid_input";
    case ErrorCode::missing_column: return "missing_column";
    case ErrorCode::parse_error: return "parse_error";
    case ErrorCode::rank_deficient: return "rank_deficient";
    case ErrorCode::degenerate_fit: return "degenerate_fit";
    case ErrorCode::empty_subclass: return "empty_subclass";
    case ErrorCode::singular: return "singular";
    case ErrorCode::too_many_failures: return "too_many_failures";
    case ErrorCode::io_error: return "io_error";
  }
  return "unknown";
}

}  // namespace drf
