#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace okgc {

enum class ErrorKind {
  // corpus
  MalformedRecord,
  SpanOutOfRange,
  EmptyCorpus,
  TooSmall,
  SlotMismatch,
  MissingLabel,
  InvalidClustering,
  // embedding
  BadMagic,
  VersionMismatch,
  CountMismatch,
  TruncatedFile,
  DegenerateInput,
  ZeroNorm,
  // metrics
  OverlapNotAllowed,
  UniverseMismatch,
  EmptyClustering,
  MissingField,
  // harness
  EmptyGrid,
  InvalidConfig,
  Io,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::MalformedRecord: return "MalformedRecord";
    case ErrorKind::SpanOutOfRange: return "SpanOutOfRange";
    case ErrorKind::EmptyCorpus: return "EmptyCorpus";
    case ErrorKind::TooSmall: return "TooSmall";
    case ErrorKind::SlotMismatch: return "SlotMismatch";
    case ErrorKind::MissingLabel: return "MissingLabel";
    case ErrorKind::InvalidClustering: return "InvalidClustering";
    case ErrorKind::BadMagic: return "BadMagic";
    case ErrorKind::VersionMismatch: return "VersionMismatch";
    case ErrorKind::CountMismatch: return "CountMismatch";
    case ErrorKind::TruncatedFile: return "TruncatedFile";
    case ErrorKind::DegenerateInput: return "DegenerateInput";
    case ErrorKind::ZeroNorm: return "ZeroNorm";
    case ErrorKind::OverlapNotAllowed: return "OverlapNotAllowed";
    case ErrorKind::UniverseMismatch: return "UniverseMismatch";
    case ErrorKind::EmptyClustering: return "EmptyClustering";
    case ErrorKind::MissingField: return "MissingField";
    case ErrorKind::EmptyGrid: return "EmptyGrid";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::Io: return "Io";
  }
  return "Unknown";
}

/// Exception carrying a machine-checkable kind. `where` is a 1-based line
/// number for file formats, a row index for matrices, or 0 when unused.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message, std::size_t where = 0)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message),
        kind_(kind),
        where_(where) {}

  ErrorKind kind() const noexcept { return kind_; }
  std::size_t where() const noexcept { return where_; }

 private:
  ErrorKind kind_;
  std::size_t where_;
};

}  // namespace okgc
