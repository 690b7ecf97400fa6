#include "skullkit/error.hpp"

namespace skullkit {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::MalformedHeader: return "MalformedHeader";
    case ErrorCode::UnsupportedFeature: return "UnsupportedFeature";
    case ErrorCode::PayloadSizeMismatch: return "PayloadSizeMismatch";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::UnsupportedDatatype: return "UnsupportedDatatype";
    case ErrorCode::TruncatedPayload: return "TruncatedPayload";
    case ErrorCode::DimsMismatch: return "DimsMismatch";
    case ErrorCode::RegionOutOfBounds: return "RegionOutOfBounds";
    case ErrorCode::SpecDoesNotFit: return "SpecDoesNotFit";
    case ErrorCode::EmptyImplant: return "EmptyImplant";
    case ErrorCode::NotBinary: return "NotBinary";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::NoTape: return "NoTape";
    case ErrorCode::MissingGrad: return "MissingGrad";
    case ErrorCode::InsufficientData: return "InsufficientData";
    case ErrorCode::DataError: return "DataError";
    case ErrorCode::ResumeMismatch: return "ResumeMismatch";
    case ErrorCode::CheckpointCorrupt: return "CheckpointCorrupt";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::EmptyForeground: return "EmptyForeground";
    case ErrorCode::IoError: return "IoError";
  }
  return "UnknownError";
}

}  // namespace skullkit
