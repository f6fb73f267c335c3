#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace artkit {

enum class ErrorCode {
  // voxel_grid
  ZeroExtentMesh,
  InvalidMesh,
  ResolutionTooLarge,
  ResolutionMismatch,
  // sparse_codec
  OutOfRange,
  IndexOutOfCodebook,
  MalformedToken,
  DuplicateCoordinate,
  // vq_core
  DimensionMismatch,
  EmptyCodebook,
  NoSamples,
  DivergedLoss,
  CheckpointVersion,
  // part_segmentation
  EmptyPart,
  // urdf_builder
  SchemaViolation,
  RangeViolation,
  MultipleRoots,
  UnknownParent,
  CycleDetected,
  ZeroAxis,
  InvalidLimits,
  MissingMesh,
  InvalidUrdf,
  // articulation_metrics
  EmptyGeometry,
  // general
  Io,
  InvalidArgument,
};

std::string_view to_string(ErrorCode code);

/// Every library failure is reported as an Error carrying a stable code; the
/// message is human-readable and names the offending input where possible.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace artkit
