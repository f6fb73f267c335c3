#pragma once

#include "artkit/mesh.hpp"
#include "artkit/voxel_grid.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace artkit::fixtures {

/// Closed UV ellipsoid centered at `center` with semi-axes `radii`.
Mesh ellipsoid(const Vec3& center, const Vec3& radii, int rings = 48, int segments = 96);

/// Closed axis-aligned box with two triangles per face.
Mesh box(const Vec3& lo, const Vec3& hi);

/// L-shaped profile in the xz-plane extruded along y.
/// `width` along x, `height` along z, `thickness` of both legs, `depth` along y.
Mesh l_bracket(const Vec3& origin, double width, double height, double thickness, double depth);

/// Concatenates meshes without welding vertices.
Mesh merge(const std::vector<Mesh>& parts);

/// Closed box with `n` subdivisions per edge so vertices are dense enough for
/// smoothing and voting to matter.
Mesh subdivided_box(const Vec3& lo, const Vec3& hi, int n);

struct NamedShape {
  std::string name;
  Mesh mesh;
};

/// Sphere/ellipsoid shells, boxes and L-brackets with seeded variation
/// (7 shells, 7 boxes, 6 brackets for count = 20).
std::vector<NamedShape> surface_shape_suite(int count = 20, std::uint64_t seed = 7);

/// normalize -> voxelize at `resolution`.
OccupancyGrid voxelize_normalized(const Mesh& mesh, int resolution = 64);

struct StorageBoxFiles {
  std::filesystem::path mesh;      // both parts in one OBJ
  std::filesystem::path metadata;  // captions from the template, generated token streams
  std::filesystem::path gt_parts;  // part_0.obj, part_1.obj
};

/// Frame (part 0) below a lid (part 1), split at the latent mid-plane so the
/// two token streams never share a latent cell. Captions are copied from
/// `template_json`; parts_voxels is replaced by the occupied 8^3 cells of each
/// part under the whole-mesh normalization.
StorageBoxFiles write_storage_box(const std::filesystem::path& template_json, const std::filesystem::path& dir);

}  // namespace artkit::fixtures
