#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace spot {

enum class ErrorCode {
  NotFound,
  IncompatibleDatasets,
  EncodingError,
  MalformedRow,
  MalformedInput,
  UnsupportedStructure,
  KindMismatch,
  LimitExceeded,
  InvalidArgument,
  InvalidSelection,
  Conflict,
  ParseError,
  UnsupportedVersion,
  ValidationError,
  Backend,
  Cancelled,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::NotFound: return "NotFound";
    case ErrorCode::IncompatibleDatasets: return "IncompatibleDatasets";
    case ErrorCode::EncodingError: return "EncodingError";
    case ErrorCode::MalformedRow: return "MalformedRow";
    case ErrorCode::MalformedInput: return "MalformedInput";
    case ErrorCode::UnsupportedStructure: return "UnsupportedStructure";
    case ErrorCode::KindMismatch: return "KindMismatch";
    case ErrorCode::LimitExceeded: return "LimitExceeded";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::InvalidSelection: return "InvalidSelection";
    case ErrorCode::Conflict: return "Conflict";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::UnsupportedVersion: return "UnsupportedVersion";
    case ErrorCode::ValidationError: return "ValidationError";
    case ErrorCode::Backend: return "Backend";
    case ErrorCode::Cancelled: return "Cancelled";
  }
  return "Unknown";
}

inline std::optional<ErrorCode> error_code_from_string(std::string_view s) {
  for (int i = 0; i <= static_cast<int>(ErrorCode::Cancelled); ++i)
    if (to_string(static_cast<ErrorCode>(i)) == s) return static_cast<ErrorCode>(i);
  return std::nullopt;
}

/// Every failure raised by the library carries one of the codes above so
/// callers (server, CLI) can map it without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code), detail_(message) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

/// MalformedRow carries the zero-based data row index (header excluded).
class MalformedRowError : public Error {
 public:
  MalformedRowError(std::size_t row, const std::string& message)
      : Error(ErrorCode::MalformedRow, "row " + std::to_string(row) + ": " + message), row_(row) {}
  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

/// ParseError and ValidationError carry a JSON-pointer style location.
class DocumentError : public Error {
 public:
  DocumentError(ErrorCode code, std::string path, const std::string& message)
      : Error(code, path + ": " + message), path_(std::move(path)) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

enum class WarningCode { EmptyFacet, IndexSkipped, SavedStale };

inline std::string_view to_string(WarningCode code) {
  switch (code) {
    case WarningCode::EmptyFacet: return "EmptyFacet";
    case WarningCode::IndexSkipped: return "IndexSkipped";
    case WarningCode::SavedStale: return "SavedStale";
  }
  return "Unknown";
}

/// Non-fatal conditions are reported, not thrown.
struct Warning {
  WarningCode code;
  std::string subject;
  std::string message;
};

using Warnings = std::vector<Warning>;

}  // namespace spot
