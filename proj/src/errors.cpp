#include "mepic/errors.hpp"

namespace mepic {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::InsufficientBlocks: return "InsufficientBlocks";
    case ErrorCode::BlockIsFree: return "BlockIsFree";
    case ErrorCode::RefcountUnderflow: return "RefcountUnderflow";
    case ErrorCode::BlockBusy: return "BlockBusy";
    case ErrorCode::MalformedMarkers: return "MalformedMarkers";
    case ErrorCode::AmbiguousPadding: return "AmbiguousPadding";
    case ErrorCode::OwnershipConflict: return "OwnershipConflict";
    case ErrorCode::AlreadyResident: return "AlreadyResident";
    case ErrorCode::NotResident: return "NotResident";
    case ErrorCode::NotInRemote: return "NotInRemote";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::EmptyValidSet: return "EmptyValidSet";
    case ErrorCode::SpanOutOfRange: return "SpanOutOfRange";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::DoubleRelease: return "DoubleRelease";
    case ErrorCode::TraceFormatError: return "TraceFormatError";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::IoError: return "IoError";
  }
  return "UnknownError";
}

}  // namespace mepic
