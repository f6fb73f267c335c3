#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <array>
#include <limits>
#include <filesystem>
#include <string>
#include <vector>

namespace artkit {

using Vec3 = Eigen::Vector3d;
using Vec2 = Eigen::Vector2d;
using Face = std::array<int, 3>;

/// Triangle mesh in meters. UVs are indexed per face corner so seams survive a
/// load/split/save cycle untouched.
struct Mesh {
  std::vector<Vec3> vertices;
  std::vector<Face> faces;

  std::vector<Vec2> uvs;
  std::vector<Face> face_uvs;  // empty, or one entry per face

  std::string material_library;          // OBJ mtllib reference, passed through verbatim
  std::vector<std::string> materials;    // usemtl names
  std::vector<int> face_materials;       // empty, or per-face index into materials (-1 = none)

  bool has_uvs() const { return !face_uvs.empty(); }
  bool has_materials() const { return !face_materials.empty(); }
};

struct Aabb {
  Vec3 min = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 max = Vec3::Constant(-std::numeric_limits<double>::infinity());

  void extend(const Vec3& p) {
    min = min.cwiseMin(p);
    max = max.cwiseMax(p);
  }
  bool empty() const { return (max.array() < min.array()).any(); }
  Vec3 extent() const { return max - min; }
  Vec3 center() const { return 0.5 * (min + max); }
};

Aabb bounding_box(const Mesh& mesh);

/// Throws InvalidMesh unless face indices are in range, every face has three
/// distinct vertices and the mesh has at least three vertices.
void validate_mesh(const Mesh& mesh);

double surface_area(const Mesh& mesh);

/// Wavefront OBJ. Polygons are fan-triangulated on load; normals are dropped.
Mesh parse_obj(const std::string& text);
Mesh read_obj(const std::filesystem::path& path);
std::string format_obj(const Mesh& mesh);
void write_obj(const Mesh& mesh, const std::filesystem::path& path);

/// Shortest round-trip decimal representation.
std::string format_double(double value);

}  // namespace artkit
