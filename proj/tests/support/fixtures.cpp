#include "fixtures.hpp"

#include "artkit/random.hpp"
#include "artkit/sparse_codec.hpp"
#include "artkit/vq_core.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>

namespace artkit::fixtures {

Mesh ellipsoid(const Vec3& center, const Vec3& radii, int rings, int segments) {
  Mesh m;
  m.vertices.push_back(center + Vec3(0, 0, radii.z()));
  for (int r = 1; r < rings; ++r) {
    const double theta = M_PI * r / rings;
    for (int s = 0; s < segments; ++s) {
      const double phi = 2.0 * M_PI * s / segments;
      m.vertices.push_back(center + Vec3(radii.x() * std::sin(theta) * std::cos(phi),
                                         radii.y() * std::sin(theta) * std::sin(phi), radii.z() * std::cos(theta)));
    }
  }
  m.vertices.push_back(center - Vec3(0, 0, radii.z()));
  const int south = static_cast<int>(m.vertices.size()) - 1;
  auto ring = [&](int r, int s) { return 1 + (r - 1) * segments + (s % segments); };
  for (int s = 0; s < segments; ++s) m.faces.push_back({0, ring(1, s), ring(1, s + 1)});
  for (int r = 1; r + 1 < rings; ++r) {
    for (int s = 0; s < segments; ++s) {
      m.faces.push_back({ring(r, s), ring(r + 1, s), ring(r + 1, s + 1)});
      m.faces.push_back({ring(r, s), ring(r + 1, s + 1), ring(r, s + 1)});
    }
  }
  for (int s = 0; s < segments; ++s) m.faces.push_back({south, ring(rings - 1, s + 1), ring(rings - 1, s)});
  return m;
}

Mesh box(const Vec3& lo, const Vec3& hi) { return subdivided_box(lo, hi, 1); }

Mesh subdivided_box(const Vec3& lo, const Vec3& hi, int n) {
  Mesh m;
  // Each face is an n x n lattice; duplicated edge vertices keep this simple.
  auto add_face = [&](const Vec3& origin, const Vec3& du, const Vec3& dv) {
    const int base = static_cast<int>(m.vertices.size());
    for (int i = 0; i <= n; ++i) {
      for (int j = 0; j <= n; ++j) m.vertices.push_back(origin + du * (double(i) / n) + dv * (double(j) / n));
    }
    auto id = [&](int i, int j) { return base + i * (n + 1) + j; };
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        m.faces.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
        m.faces.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
      }
    }
  };
  const Vec3 e = hi - lo;
  const Vec3 ex(e.x(), 0, 0), ey(0, e.y(), 0), ez(0, 0, e.z());
  add_face(lo, ey, ex);               // z = lo
  add_face(lo + ez, ex, ey);          // z = hi
  add_face(lo, ex, ez);               // y = lo
  add_face(lo + ey, ez, ex);          // y = hi
  add_face(lo, ez, ey);               // x = lo
  add_face(lo + ex, ey, ez);          // x = hi
  return m;
}

Mesh l_bracket(const Vec3& origin, double width, double height, double thickness, double depth) {
  const std::vector<Vec2> profile = {{0, 0}, {width, 0}, {width, thickness}, {thickness, thickness},
                                     {thickness, height}, {0, height}};
  Mesh m;
  const int n = static_cast<int>(profile.size());
  for (double y : {0.0, depth}) {
    for (const auto& p : profile) m.vertices.push_back(origin + Vec3(p.x(), y, p.y()));
  }
  // The profile is star-shaped from its first corner, so a fan works.
  for (int k = 1; k + 1 < n; ++k) {
    m.faces.push_back({0, k + 1, k});
    m.faces.push_back({n, n + k, n + k + 1});
  }
  for (int k = 0; k < n; ++k) {
    const int a = k;
    const int b = (k + 1) % n;
    m.faces.push_back({a, b, n + b});
    m.faces.push_back({a, n + b, n + a});
  }
  return m;
}

Mesh merge(const std::vector<Mesh>& parts) {
  Mesh out;
  for (const auto& p : parts) {
    const int base = static_cast<int>(out.vertices.size());
    out.vertices.insert(out.vertices.end(), p.vertices.begin(), p.vertices.end());
    for (const auto& f : p.faces) out.faces.push_back({f[0] + base, f[1] + base, f[2] + base});
  }
  return out;
}

std::vector<NamedShape> surface_shape_suite(int count, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<NamedShape> out;
  const int shells = (count * 7 + 19) / 20;
  const int boxes = (count * 7 + 19) / 20;
  for (int i = 0; i < count; ++i) {
    if (i < shells) {
      const Vec3 radii(rng.uniform(0.6, 1.0), rng.uniform(0.6, 1.0), rng.uniform(0.6, 1.0));
      out.push_back({"shell_" + std::to_string(i), ellipsoid(Vec3::Zero(), radii)});
    } else if (i < shells + boxes) {
      const Vec3 hi(rng.uniform(0.4, 1.0), rng.uniform(0.4, 1.0), rng.uniform(0.4, 1.0));
      out.push_back({"box_" + std::to_string(i), box(Vec3::Zero(), hi)});
    } else {
      const double w = rng.uniform(0.6, 1.0);
      const double h = rng.uniform(0.6, 1.0);
      const double t = rng.uniform(0.15, 0.35) * std::min(w, h);
      const double d = rng.uniform(0.4, 1.0);
      out.push_back({"bracket_" + std::to_string(i), l_bracket(Vec3::Zero(), w, h, t, d)});
    }
  }
  return out;
}

OccupancyGrid voxelize_normalized(const Mesh& mesh, int resolution) {
  return voxelize_mesh(normalize_mesh(mesh).mesh, resolution);
}

StorageBoxFiles write_storage_box(const std::filesystem::path& template_json, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "gt_parts");
  const std::vector<Mesh> parts = {subdivided_box(Vec3(0, 0, 0), Vec3(0.4, 0.19, 0.4), 6),
                                   subdivided_box(Vec3(0, 0.21, 0), Vec3(0.4, 0.4, 0.4), 6)};
  const Mesh whole = merge(parts);
  const NormalizationTransform t = normalize_mesh(whole).transform;

  std::ifstream in(template_json);
  auto doc = nlohmann::ordered_json::parse(in);
  const CodecProfile profile = CodecProfile::compact();
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const OccupancyGrid cells =
        vq::occupancy_downsample(voxelize_mesh(apply_transform(parts[i], t)), profile.dims);
    IndexGrid indices(profile.dims);
    for (std::size_t c = 0; c < cells.cell_count(); ++c) {
      if (cells.at_index(c)) indices.indices[c] = 1 + static_cast<std::uint32_t>((c * 37 + i * 11) % 4095);
    }
    doc["parts_voxels"][std::to_string(i)] = serialize_tokens(tokenize_grid(indices, profile));
    write_obj(parts[i], dir / "gt_parts" / ("part_" + std::to_string(i) + ".obj"));
  }

  StorageBoxFiles files{dir / "storage_box.obj", dir / "storage_box.json", dir / "gt_parts"};
  write_obj(whole, files.mesh);
  std::ofstream(files.metadata) << doc.dump(2) << "\n";
  return files;
}

}  // namespace artkit::fixtures
