#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace genir {

enum class ErrorCode {
  // embedding / index
  ZeroVector,
  DimensionMismatch,
  NonFinite,
  DuplicateId,
  EmptyInput,
  EmptyIndex,
  UnknownTarget,
  InvalidArgument,
  // persistence
  BadMagic,
  UnsupportedVersion,
  TruncatedFile,
  IoError,
  OutputExists,
  // gateway
  BackendUnavailable,
  BackendTimeout,
  BackendRejected,
  MalformedResponse,
  PromptTooLong,
  MissingFeedback,
  // sessions
  InvalidConfig,
  SessionFinished,
  EmptyQuery,
  WrongMode,
  // trajectories / evaluation
  MalformedLine,
  SchemaVersionUnsupported,
  EmptyTraceSet,
  InconsistentHorizon,
  OutOfRange,
  UnpairedSessions,
  CurationFailed,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::ZeroVector: return "ZeroVector";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::EmptyIndex: return "EmptyIndex";
    case ErrorCode::UnknownTarget: return "UnknownTarget";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::UnsupportedVersion: return "UnsupportedVersion";
    case ErrorCode::TruncatedFile: return "TruncatedFile";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::OutputExists: return "OutputExists";
    case ErrorCode::BackendUnavailable: return "BackendUnavailable";
    case ErrorCode::BackendTimeout: return "BackendTimeout";
    case ErrorCode::BackendRejected: return "BackendRejected";
    case ErrorCode::MalformedResponse: return "MalformedResponse";
    case ErrorCode::PromptTooLong: return "PromptTooLong";
    case ErrorCode::MissingFeedback: return "MissingFeedback";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::SessionFinished: return "SessionFinished";
    case ErrorCode::EmptyQuery: return "EmptyQuery";
    case ErrorCode::WrongMode: return "WrongMode";
    case ErrorCode::MalformedLine: return "MalformedLine";
    case ErrorCode::SchemaVersionUnsupported: return "SchemaVersionUnsupported";
    case ErrorCode::EmptyTraceSet: return "EmptyTraceSet";
    case ErrorCode::InconsistentHorizon: return "InconsistentHorizon";
    case ErrorCode::OutOfRange: return "OutOfRange";
    case ErrorCode::UnpairedSessions: return "UnpairedSessions";
    case ErrorCode::CurationFailed: return "CurationFailed";
  }
  return "Unknown";
}

/// Every failure raised by the library carries a machine-checkable code plus
/// the offending detail (an id, a path, a line number...).
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string detail)
      : std::runtime_error(std::string(to_string(code)) + ": " + detail),
        code_(code),
        detail_(std::move(detail)) {}

  [[nodiscard]] ErrorCode code() const noexcept { return code_; }
  [[nodiscard]] const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

/// Errors worth another attempt against the same backend.
constexpr bool is_transient(ErrorCode code) {
  return code == ErrorCode::BackendUnavailable || code == ErrorCode::BackendTimeout;
}

}  // namespace genir
