#include "artkit/error.hpp"

namespace artkit {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::ZeroExtentMesh: return "ZeroExtentMesh";
    case ErrorCode::InvalidMesh: return "InvalidMesh";
    case ErrorCode::ResolutionTooLarge: return "ResolutionTooLarge";
    case ErrorCode::ResolutionMismatch: return "ResolutionMismatch";
    case ErrorCode::OutOfRange: return "OutOfRange";
    case ErrorCode::IndexOutOfCodebook: return "IndexOutOfCodebook";
    case ErrorCode::MalformedToken: return "MalformedToken";
    case ErrorCode::DuplicateCoordinate: return "DuplicateCoordinate";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::EmptyCodebook: return "EmptyCodebook";
    case ErrorCode::NoSamples: return "NoSamples";
    case ErrorCode::DivergedLoss: return "DivergedLoss";
    case ErrorCode::CheckpointVersion: return "CheckpointVersion";
    case ErrorCode::EmptyPart: return "EmptyPart";
    case ErrorCode::SchemaViolation: return "SchemaViolation";
    case ErrorCode::RangeViolation: return "RangeViolation";
    case ErrorCode::MultipleRoots: return "MultipleRoots";
    case ErrorCode::UnknownParent: return "UnknownParent";
    case ErrorCode::CycleDetected: return "CycleDetected";
    case ErrorCode::ZeroAxis: return "ZeroAxis";
    case ErrorCode::InvalidLimits: return "InvalidLimits";
    case ErrorCode::MissingMesh: return "MissingMesh";
    case ErrorCode::InvalidUrdf: return "InvalidUrdf";
    case ErrorCode::EmptyGeometry: return "EmptyGeometry";
    case ErrorCode::Io: return "Io";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

}  // namespace artkit
