#pragma once

#include "artkit/voxel_grid.hpp"

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace artkit {

/// Latent grid shape plus codebook size; index 0 is the reserved zero token.
struct CodecProfile {
  GridDims dims{8, 8, 8};
  std::uint32_t codebook_size = 4096;

  /// 8x8x8 latent cells, K in [0, 4095].
  static CodecProfile compact() { return {{8, 8, 8}, 4096}; }
  /// 16x8x8 latent cells, K in [0, 8191].
  static CodecProfile extended() { return {{16, 8, 8}, 8192}; }
  /// "8x8x8" or "16x8x8".
  static CodecProfile by_name(std::string_view name);

  std::uint32_t cell_count() const { return static_cast<std::uint32_t>(dims.cell_count()); }
  std::string name() const;
  bool operator==(const CodecProfile&) const = default;
};

/// xyz = (Y*Z)*x + Z*y + z. Throws OutOfRange outside dims.
std::uint32_t linearize(const CellCoord& c, const GridDims& dims);
CellCoord delinearize(std::uint32_t index, const GridDims& dims);

struct VoxelToken {
  std::uint32_t xyz = 0;
  std::uint32_t k = 0;
  bool operator==(const VoxelToken&) const = default;
};

/// Canonical form: ascending xyz, no duplicates, no zero tokens.
struct TokenSequence {
  CodecProfile profile;
  std::vector<VoxelToken> tokens;
  bool operator==(const TokenSequence&) const = default;
};

/// Dense grid of codebook indices, x-major.
struct IndexGrid {
  GridDims dims{8, 8, 8};
  std::vector<std::uint32_t> indices;

  IndexGrid() : indices(dims.cell_count(), 0) {}
  explicit IndexGrid(const GridDims& d) : dims(d), indices(d.cell_count(), 0) {}

  std::uint32_t& at(const CellCoord& c) { return indices[dims.linear(c.x, c.y, c.z)]; }
  std::uint32_t at(const CellCoord& c) const { return indices[dims.linear(c.x, c.y, c.z)]; }
  bool operator==(const IndexGrid&) const = default;
};

TokenSequence tokenize_grid(const IndexGrid& grid, const CodecProfile& profile);
IndexGrid densify(const TokenSequence& seq);

inline constexpr std::string_view kVoxelMarker = "<voxel>";

/// `<voxel> xyz K` triplets joined by single spaces; no trailing whitespace.
std::string serialize_tokens(const TokenSequence& seq);

/// Strict parse; reports MalformedToken with the byte offset, DuplicateCoordinate
/// or OutOfRange. Output is canonicalized to ascending xyz.
TokenSequence parse_tokens(std::string_view text, const CodecProfile& profile);

struct CompressionStats {
  std::size_t sparse_tokens = 0;  // triplets emitted
  std::size_t dense_tokens = 0;   // triplets a dense stream would need
  double reduction = 0.0;         // 1 - sparse / dense
};

CompressionStats compression_stats(const TokenSequence& seq);

}  // namespace artkit
