#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ragseg {

enum class ErrorCode {
  InvalidMask,
  ShapeMismatch,
  DegenerateMask,
  DegenerateEmbedding,
  InvalidConfig,
  InvalidName,
  UnknownClass,
  CorruptDatabase,
  InvalidComparison,
  InvalidDataset,
  InfeasibleSpec,
  NoRecords,
  StaleCache,
  ParseError,
  IoError,
};

// Sub-kind for CorruptDatabase; None for every other code.
enum class Corruption { None, BadMagic, VersionMismatch, Truncated, Checksum };

inline std::string_view to_string(ErrorCode code);
inline std::string_view to_string(Corruption kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}
  Error(Corruption kind, const std::string& what)
      : std::runtime_error("CorruptDatabase(" + std::string(to_string(kind)) + "): " + what),
        code_(ErrorCode::CorruptDatabase),
        corruption_(kind) {}

  ErrorCode code() const noexcept { return code_; }
  Corruption corruption() const noexcept { return corruption_; }

 private:
  ErrorCode code_;
  Corruption corruption_ = Corruption::None;
};

// Re-throws `e` with an element position attached, keeping code and sub-kind.
[[noreturn]] inline void rethrow_at(const Error& e, std::string_view what, std::size_t index) {
  const std::string msg = std::string(what) + " " + std::to_string(index) + ": " + e.what();
  if (e.code() == ErrorCode::CorruptDatabase) throw Error(e.corruption(), msg);
  throw Error(e.code(), msg);
}

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidMask: return "InvalidMask";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::DegenerateMask: return "DegenerateMask";
    case ErrorCode::DegenerateEmbedding: return "DegenerateEmbedding";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::InvalidName: return "InvalidName";
    case ErrorCode::UnknownClass: return "UnknownClass";
    case ErrorCode::CorruptDatabase: return "CorruptDatabase";
    case ErrorCode::InvalidComparison: return "InvalidComparison";
    case ErrorCode::InvalidDataset: return "InvalidDataset";
    case ErrorCode::InfeasibleSpec: return "InfeasibleSpec";
    case ErrorCode::NoRecords: return "NoRecords";
    case ErrorCode::StaleCache: return "StaleCache";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

inline std::string_view to_string(Corruption kind) {
  switch (kind) {
    case Corruption::None: return "none";
    case Corruption::BadMagic: return "bad-magic";
    case Corruption::VersionMismatch: return "version";
    case Corruption::Truncated: return "truncated";
    case Corruption::Checksum: return "checksum";
  }
  return "unknown";
}

}  // namespace ragseg
