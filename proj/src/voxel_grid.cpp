#include "artkit/voxel_grid.hpp"

#include "artkit/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>

namespace artkit {

NormalizationTransform fit_normalization(const Aabb& box, double margin) {
  if (box.empty()) throw Error(ErrorCode::ZeroExtentMesh, "mesh has no vertices");
  if (!(margin >= 0.0 && margin < 0.5)) {
    throw Error(ErrorCode::InvalidArgument, "margin must lie in [0, 0.5)");
  }
  const double extent = box.extent().maxCoeff();
  if (!(extent > 0.0)) throw Error(ErrorCode::ZeroExtentMesh, "all vertices coincide");
  NormalizationTransform t;
  t.scale = (1.0 - 2.0 * margin) / extent;
  t.translation = Vec3::Constant(0.5 / t.scale) - box.center();
  return t;
}

Mesh apply_transform(const Mesh& mesh, const NormalizationTransform& transform) {
  Mesh out = mesh;
  for (auto& v : out.vertices) v = transform.apply(v);
  return out;
}

NormalizedMesh normalize_mesh(const Mesh& mesh, double margin) {
  auto transform = fit_normalization(bounding_box(mesh), margin);
  return {apply_transform(mesh, transform), transform};
}

OccupancyGrid::OccupancyGrid(GridDims dims) : dims_(dims), cells_(dims.cell_count(), 0) {
  if (dims.x <= 0 || dims.y <= 0 || dims.z <= 0) {
    throw Error(ErrorCode::InvalidArgument, "grid dimensions must be positive");
  }
}

CellCoord OccupancyGrid::coord(std::size_t i) const {
  const int z = static_cast<int>(i % dims_.z);
  const int y = static_cast<int>((i / dims_.z) % dims_.y);
  const int x = static_cast<int>(i / (static_cast<std::size_t>(dims_.z) * dims_.y));
  return {x, y, z};
}

std::size_t OccupancyGrid::occupied_count() const {
  return static_cast<std::size_t>(std::count(cells_.begin(), cells_.end(), std::uint8_t{1}));
}

double OccupancyGrid::occupancy_fraction() const {
  return cells_.empty() ? 0.0 : static_cast<double>(occupied_count()) / static_cast<double>(cells_.size());
}

std::vector<CellCoord> OccupancyGrid::occupied_cells() const {
  std::vector<CellCoord> out;
  for (std::size_t i = 0; i < cells_.size(); ++i) {
    if (cells_[i]) out.push_back(coord(i));
  }
  return out;
}

Vec3 OccupancyGrid::cell_center(const CellCoord& c) const {
  return {(c.x + 0.5) / dims_.x, (c.y + 0.5) / dims_.y, (c.z + 0.5) / dims_.z};
}

namespace {

bool axis_separates(const Vec3& axis, const Vec3& v0, const Vec3& v1, const Vec3& v2, const Vec3& half) {
  const double p0 = axis.dot(v0);
  const double p1 = axis.dot(v1);
  const double p2 = axis.dot(v2);
  const double r = half.x() * std::abs(axis.x()) + half.y() * std::abs(axis.y()) + half.z() * std::abs(axis.z());
  return std::min({p0, p1, p2}) > r || std::max({p0, p1, p2}) < -r;
}

}  // namespace

bool triangle_box_overlap(const Vec3& box_center, const Vec3& box_half, const Vec3& a, const Vec3& b,
                          const Vec3& c) {
  const Vec3 v0 = a - box_center;
  const Vec3 v1 = b - box_center;
  const Vec3 v2 = c - box_center;

  // Box face normals.
  for (int k = 0; k < 3; ++k) {
    const double lo = std::min({v0[k], v1[k], v2[k]});
    const double hi = std::max({v0[k], v1[k], v2[k]});
    if (lo > box_half[k] || hi < -box_half[k]) return false;
  }

  // Triangle plane.
  const Vec3 e0 = v1 - v0;
  const Vec3 e1 = v2 - v1;
  const Vec3 e2 = v0 - v2;
  const Vec3 normal = e0.cross(e1);
  {
    const double d = normal.dot(v0);
    const double r = box_half.x() * std::abs(normal.x()) + box_half.y() * std::abs(normal.y()) +
                     box_half.z() * std::abs(normal.z());
    if (d > r || d < -r) return false;
  }

  // Edge x box-axis cross products.
  const Vec3 edges[3] = {e0, e1, e2};
  for (const auto& e : edges) {
    for (int k = 0; k < 3; ++k) {
      Vec3 axis = Vec3::Zero();
      axis[k] = 1.0;
      axis = axis.cross(e);
      if (axis.squaredNorm() == 0.0) continue;
      if (axis_separates(axis, v0, v1, v2, box_half)) return false;
    }
  }
  return true;
}

OccupancyGrid voxelize_mesh(const Mesh& mesh, int resolution, int max_resolution) {
  if (resolution <= 0) throw Error(ErrorCode::InvalidArgument, "resolution must be positive");
  if (resolution > max_resolution) {
    throw Error(ErrorCode::ResolutionTooLarge,
                std::to_string(resolution) + " exceeds cap " + std::to_string(max_resolution));
  }
  if (mesh.faces.empty()) throw Error(ErrorCode::InvalidMesh, "mesh has no faces");
  validate_mesh(mesh);

  OccupancyGrid grid(resolution);
  const double cell = 1.0 / resolution;
  const Vec3 half = Vec3::Constant(0.5 * cell);
  auto cell_range = [&](double lo, double hi) {
    int i0 = static_cast<int>(std::floor(lo * resolution));
    int i1 = static_cast<int>(std::floor(hi * resolution));
    return std::pair{std::clamp(i0, 0, resolution - 1), std::clamp(i1, 0, resolution - 1)};
  };

  for (const auto& f : mesh.faces) {
    const Vec3& a = mesh.vertices[f[0]];
    const Vec3& b = mesh.vertices[f[1]];
    const Vec3& c = mesh.vertices[f[2]];
    const Vec3 lo = a.cwiseMin(b).cwiseMin(c);
    const Vec3 hi = a.cwiseMax(b).cwiseMax(c);
    if ((hi.array() < 0.0).any() || (lo.array() > 1.0).any()) continue;
    auto [x0, x1] = cell_range(lo.x(), hi.x());
    auto [y0, y1] = cell_range(lo.y(), hi.y());
    auto [z0, z1] = cell_range(lo.z(), hi.z());
    for (int x = x0; x <= x1; ++x) {
      for (int y = y0; y <= y1; ++y) {
        for (int z = z0; z <= z1; ++z) {
          if (grid.at(x, y, z)) continue;
          const Vec3 center((x + 0.5) * cell, (y + 0.5) * cell, (z + 0.5) * cell);
          if (triangle_box_overlap(center, half, a, b, c)) grid.set(x, y, z);
        }
      }
    }
  }
  return grid;
}

double grid_iou(const OccupancyGrid& a, const OccupancyGrid& b) {
  if (!(a.dims() == b.dims())) throw Error(ErrorCode::ResolutionMismatch, "grids differ in resolution");
  std::size_t inter = 0;
  std::size_t uni = 0;
  for (std::size_t i = 0; i < a.cell_count(); ++i) {
    const bool x = a.at_index(i);
    const bool y = b.at_index(i);
    inter += (x && y) ? 1 : 0;
    uni += (x || y) ? 1 : 0;
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int k = 0; k < 4; ++k) out.push_back(static_cast<std::uint8_t>((v >> (8 * k)) & 0xFFu));
}

std::uint32_t get_u32(const std::vector<std::uint8_t>& in, std::size_t at) {
  std::uint32_t v = 0;
  for (int k = 0; k < 4; ++k) v |= static_cast<std::uint32_t>(in[at + k]) << (8 * k);
  return v;
}

}  // namespace

std::vector<std::uint8_t> encode_grid(const OccupancyGrid& grid) {
  std::vector<std::uint8_t> out = {'A', 'V', 'G', 'X'};
  put_u32(out, static_cast<std::uint32_t>(grid.dims().x));
  put_u32(out, static_cast<std::uint32_t>(grid.dims().y));
  put_u32(out, static_cast<std::uint32_t>(grid.dims().z));
  const std::size_t n = grid.cell_count();
  std::vector<std::uint8_t> bits((n + 7) / 8, 0);
  for (std::size_t i = 0; i < n; ++i) {
    if (grid.at_index(i)) bits[i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
  }
  out.insert(out.end(), bits.begin(), bits.end());
  return out;
}

OccupancyGrid decode_grid(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 16 || bytes[0] != 'A' || bytes[1] != 'V' || bytes[2] != 'G' || bytes[3] != 'X') {
    throw Error(ErrorCode::Io, "not an AVGX grid file");
  }
  GridDims dims{static_cast<int>(get_u32(bytes, 4)), static_cast<int>(get_u32(bytes, 8)),
                static_cast<int>(get_u32(bytes, 12))};
  if (dims.x <= 0 || dims.y <= 0 || dims.z <= 0 || dims.x > kMaxResolution || dims.y > kMaxResolution ||
      dims.z > kMaxResolution) {
    throw Error(ErrorCode::Io, "grid header has invalid dimensions");
  }
  const std::size_t n = dims.cell_count();
  if (bytes.size() != 16 + (n + 7) / 8) throw Error(ErrorCode::Io, "grid payload size mismatch");
  OccupancyGrid grid(dims);
  for (std::size_t i = 0; i < n; ++i) {
    if (bytes[16 + i / 8] & (1u << (i % 8))) grid.set_index(i);
  }
  return grid;
}

void write_grid(const OccupancyGrid& grid, const std::filesystem::path& path) {
  auto bytes = encode_grid(grid);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

OccupancyGrid read_grid(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_grid(bytes);
}

}  // namespace artkit
