#pragma once

#include "artkit/mesh.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace artkit {

inline constexpr double kDefaultMargin = 1.0 / 64.0;
inline constexpr int kDefaultResolution = 64;
inline constexpr int kMaxResolution = 512;

/// Maps mesh coordinates into the unit cube: normalized = (p + translation) * scale.
struct NormalizationTransform {
  Vec3 translation = Vec3::Zero();
  double scale = 1.0;

  Vec3 apply(const Vec3& p) const { return (p + translation) * scale; }
  Vec3 invert(const Vec3& q) const { return q / scale - translation; }
  double invert_length(double normalized_length) const { return normalized_length / scale; }

  static NormalizationTransform identity() { return {}; }
};

/// Fits the bounding box of `mesh` into [margin, 1 - margin]^3 centered at 0.5.
/// Throws ZeroExtentMesh when every vertex coincides.
NormalizationTransform fit_normalization(const Aabb& box, double margin = kDefaultMargin);

struct NormalizedMesh {
  Mesh mesh;
  NormalizationTransform transform;
};

NormalizedMesh normalize_mesh(const Mesh& mesh, double margin = kDefaultMargin);
Mesh apply_transform(const Mesh& mesh, const NormalizationTransform& transform);

struct GridDims {
  int x = kDefaultResolution;
  int y = kDefaultResolution;
  int z = kDefaultResolution;

  std::size_t cell_count() const {
    return static_cast<std::size_t>(x) * static_cast<std::size_t>(y) * static_cast<std::size_t>(z);
  }
  /// x-major (x slowest, z fastest).
  std::size_t linear(int ix, int iy, int iz) const {
    return (static_cast<std::size_t>(ix) * y + iy) * z + iz;
  }
  bool operator==(const GridDims&) const = default;
};

struct CellCoord {
  int x = 0;
  int y = 0;
  int z = 0;
  bool operator==(const CellCoord&) const = default;
};

/// Boolean occupancy over a box of cells, stored x-major.
class OccupancyGrid {
 public:
  OccupancyGrid() = default;
  explicit OccupancyGrid(GridDims dims);
  explicit OccupancyGrid(int resolution) : OccupancyGrid(GridDims{resolution, resolution, resolution}) {}

  const GridDims& dims() const { return dims_; }
  std::size_t cell_count() const { return cells_.size(); }

  bool at(int x, int y, int z) const { return cells_[dims_.linear(x, y, z)] != 0; }
  void set(int x, int y, int z, bool occupied = true) { cells_[dims_.linear(x, y, z)] = occupied ? 1 : 0; }
  bool at_index(std::size_t i) const { return cells_[i] != 0; }
  void set_index(std::size_t i, bool occupied = true) { cells_[i] = occupied ? 1 : 0; }

  CellCoord coord(std::size_t i) const;
  std::size_t occupied_count() const;
  double occupancy_fraction() const;
  std::vector<CellCoord> occupied_cells() const;

  /// Cell center in the normalized [0,1]^3 frame.
  Vec3 cell_center(const CellCoord& c) const;

  bool operator==(const OccupancyGrid&) const = default;

 private:
  GridDims dims_{0, 0, 0};
  std::vector<std::uint8_t> cells_;
};

/// Akenine-Moller separating-axis test; boundary contact counts as overlap.
bool triangle_box_overlap(const Vec3& box_center, const Vec3& box_half, const Vec3& a, const Vec3& b,
                          const Vec3& c);

/// Surface voxelization of a mesh already normalized into [0,1]^3: a cell is
/// occupied iff some triangle overlaps its closed box.
OccupancyGrid voxelize_mesh(const Mesh& mesh, int resolution = kDefaultResolution,
                            int max_resolution = kMaxResolution);

/// |a ∩ b| / |a ∪ b|, with 1 for two empty grids.
double grid_iou(const OccupancyGrid& a, const OccupancyGrid& b);

/// "AVGX" + 3 x u32 LE dims, then cells as LSB-first packed bits, x-major.
std::vector<std::uint8_t> encode_grid(const OccupancyGrid& grid);
OccupancyGrid decode_grid(const std::vector<std::uint8_t>& bytes);
void write_grid(const OccupancyGrid& grid, const std::filesystem::path& path);
OccupancyGrid read_grid(const std::filesystem::path& path);

}  // namespace artkit
