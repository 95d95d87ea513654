#pragma once

#include <stdexcept>
#include <string>

namespace profkg {

// Broad failure category; maps onto the CLI exit codes.
enum class ErrorCategory { usage = 1, config = 2, data = 3, runtime = 4 };

enum class ErrorCode {
  // kg-core
  empty_graph,
  unknown_label,
  overlapping_roles,
  invalid_entity,
  user_without_interactions,
  // profiler
  missing_label,
  missing_dependency_profile,
  config_missing,
  config_invalid,
  rate_limited,
  empty_completion,
  timeout,
  http_error,
  profiling_failed,
  // text-encoder / io
  dimension_mismatch,
  non_finite_value,
  truncated,
  header_mismatch,
  bad_magic,
  io_error,
  // model / trainer
  shape_mismatch,
  near_zero_divisor,
  role_mismatch,
  no_negative_available,
  degenerate_row,
  non_finite_loss,
  // evaluator
  empty_relevant_set,
  // cli-io
  parse_error,
  checksum_mismatch,
  spec_invalid,
  usage,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::empty_graph: return "EmptyGraph";
    case ErrorCode::unknown_label: return "UnknownLabel";
    case ErrorCode::overlapping_roles: return "OverlappingRoles";
    case ErrorCode::invalid_entity: return "InvalidEntity";
    case ErrorCode::user_without_interactions: return "UserWithoutInteractions";
    case ErrorCode::missing_label: return "MissingLabel";
    case ErrorCode::missing_dependency_profile: return "MissingDependencyProfile";
    case ErrorCode::config_missing: return "ConfigMissing";
    case ErrorCode::config_invalid: return "ConfigInvalid";
    case ErrorCode::rate_limited: return "RateLimited";
    case ErrorCode::empty_completion: return "EmptyCompletion";
    case ErrorCode::timeout: return "Timeout";
    case ErrorCode::http_error: return "HttpError";
    case ErrorCode::profiling_failed: return "ProfilingFailed";
    case ErrorCode::dimension_mismatch: return "DimensionMismatch";
    case ErrorCode::non_finite_value: return "NonFiniteValue";
    case ErrorCode::truncated: return "Truncated";
    case ErrorCode::header_mismatch: return "HeaderMismatch";
    case ErrorCode::bad_magic: return "BadMagic";
    case ErrorCode::io_error: return "IoError";
    case ErrorCode::shape_mismatch: return "ShapeMismatch";
    case ErrorCode::near_zero_divisor: return "NearZeroDivisor";
    case ErrorCode::role_mismatch: return "RoleMismatch";
    case ErrorCode::no_negative_available: return "NoNegativeAvailable";
    case ErrorCode::degenerate_row: return "DegenerateRow";
    case ErrorCode::non_finite_loss: return "NonFiniteLoss";
    case ErrorCode::empty_relevant_set: return "EmptyRelevantSet";
    case ErrorCode::parse_error: return "ParseError";
    case ErrorCode::checksum_mismatch: return "ChecksumMismatch";
    case ErrorCode::spec_invalid: return "SpecInvalid";
    case ErrorCode::usage: return "Usage";
  }
  return "Unknown";
}

inline ErrorCategory category_of(ErrorCode code) {
  switch (code) {
    case ErrorCode::usage:
      return ErrorCategory::usage;
    case ErrorCode::config_missing:
    case ErrorCode::config_invalid:
      return ErrorCategory::config;
    case ErrorCode::empty_graph:
    case ErrorCode::unknown_label:
    case ErrorCode::overlapping_roles:
    case ErrorCode::user_without_interactions:
    case ErrorCode::dimension_mismatch:
    case ErrorCode::truncated:
    case ErrorCode::header_mismatch:
    case ErrorCode::bad_magic:
    case ErrorCode::io_error:
    case ErrorCode::parse_error:
    case ErrorCode::checksum_mismatch:
    case ErrorCode::spec_invalid:
      return ErrorCategory::data;
    default:
      return ErrorCategory::runtime;
  }
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail)
      : std::runtime_error(std::string(to_string(code)) + ": " + detail), code_(code) {}

  ErrorCode code() const noexcept { return code_; }
  ErrorCategory category() const noexcept { return category_of(code_); }

 private:
  ErrorCode code_;
};

// Thrown by the LLM transport for non-success HTTP responses.
class HttpError : public Error {
 public:
  HttpError(int status, const std::string& detail)
      : Error(ErrorCode::http_error, "status " + std::to_string(status) + ": " + detail),
        status_(status) {}

  int status() const noexcept { return status_; }

 private:
  int status_;
};

// Thrown by the CSV/TSV readers; carries the 1-based line number.
class ParseError : public Error {
 public:
  ParseError(const std::string& file, std::size_t line, const std::string& detail)
      : Error(ErrorCode::parse_error, file + ":" + std::to_string(line) + ": " + detail),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace profkg
