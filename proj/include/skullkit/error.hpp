#pragma once

#include <stdexcept>
#include <string>

namespace skullkit {

enum class ErrorCode {
  MalformedHeader,
  UnsupportedFeature,
  PayloadSizeMismatch,
  BadMagic,
  UnsupportedDatatype,
  TruncatedPayload,
  DimsMismatch,
  RegionOutOfBounds,
  SpecDoesNotFit,
  EmptyImplant,
  NotBinary,
  ShapeMismatch,
  InvalidConfig,
  NoTape,
  MissingGrad,
  InsufficientData,
  DataError,
  ResumeMismatch,
  CheckpointCorrupt,
  VersionMismatch,
  EmptyForeground,
  IoError,
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace skullkit
