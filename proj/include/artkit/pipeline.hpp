#pragma once

#include "artkit/segmentation.hpp"
#include "artkit/sparse_codec.hpp"
#include "artkit/urdf.hpp"
#include "artkit/vq_core.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace artkit {

struct PipelineConfig {
  std::filesystem::path mesh;
  std::filesystem::path metadata;
  std::filesystem::path output;
  std::string profile = "8x8x8";
  int resolution = kDefaultResolution;
  double margin = kDefaultMargin;
  double sigma = 0.0;  // <= 0: 0.05 x bbox diagonal
  double alpha = 0.5;
  int iterations = 10;
  std::filesystem::path checkpoint;  // empty: seeds at latent cell centers
  std::uint64_t seed = 0;
  std::optional<double> scale_cm;    // overrides the metadata scale
  UrdfOptions urdf;
};

/// Throws InvalidArgument for missing paths or out-of-range numbers.
void validate_config(const PipelineConfig& config);

struct PartOutcome {
  std::string id;
  std::string file;  // relative to the output directory
  std::size_t face_count = 0;
  std::size_t seed_count = 0;
  CompressionStats tokens;
};

struct PipelineResult {
  std::map<std::string, PartOutcome> parts;
  std::string urdf;
  std::string manifest;
  std::string summary;
  std::map<std::string, double> stage_ms;
};

/// normalize -> voxelize -> part tokens -> seeds -> segment -> split -> tree -> URDF.
/// Writes parts/part_<id>.obj, asset.urdf, manifest.json and summary.json under
/// config.output. A failing stage rethrows its error prefixed with the stage
/// name and input path.
PipelineResult run_pipeline(const PipelineConfig& config);

/// Integer segmentation label per metadata part: the id itself when every id
/// is a plain non-negative integer, otherwise the position in document order.
std::vector<int> part_labels(const AssetMetadata& meta);

/// Seed grid per label from the parts_voxels streams. Errors name the JSON path.
std::map<int, OccupancyGrid> metadata_seed_grids(const AssetMetadata& meta, const CodecProfile& profile,
                                                 const vq::VqModel* model,
                                                 std::map<std::string, CompressionStats>* stats = nullptr);

/// Part seeds from one token stream: decoded voxels when a model is given,
/// otherwise the occupied latent cells.
OccupancyGrid part_seed_grid(const TokenSequence& tokens, const vq::VqModel* model);

}  // namespace artkit
