#include "artkit/mesh.hpp"

#include "artkit/error.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>
#include <string_view>

namespace artkit {

Aabb bounding_box(const Mesh& mesh) {
  Aabb box;
  for (const auto& v : mesh.vertices) box.extend(v);
  return box;
}

void validate_mesh(const Mesh& mesh) {
  if (mesh.vertices.size() < 3) {
    throw Error(ErrorCode::InvalidMesh, "mesh needs at least 3 vertices, got " +
                                            std::to_string(mesh.vertices.size()));
  }
  const int n = static_cast<int>(mesh.vertices.size());
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    const auto& face = mesh.faces[f];
    for (int idx : face) {
      if (idx < 0 || idx >= n) {
        throw Error(ErrorCode::InvalidMesh,
                    "face " + std::to_string(f) + " references vertex " + std::to_string(idx));
      }
    }
    if (face[0] == face[1] || face[1] == face[2] || face[0] == face[2]) {
      throw Error(ErrorCode::InvalidMesh, "face " + std::to_string(f) + " repeats a vertex");
    }
  }
  if (mesh.has_uvs()) {
    if (mesh.face_uvs.size() != mesh.faces.size()) {
      throw Error(ErrorCode::InvalidMesh, "face UV count does not match face count");
    }
    const int nuv = static_cast<int>(mesh.uvs.size());
    for (const auto& fu : mesh.face_uvs) {
      for (int idx : fu) {
        if (idx < 0 || idx >= nuv) throw Error(ErrorCode::InvalidMesh, "UV index out of range");
      }
    }
  }
  if (mesh.has_materials() && mesh.face_materials.size() != mesh.faces.size()) {
    throw Error(ErrorCode::InvalidMesh, "face material count does not match face count");
  }
}

double surface_area(const Mesh& mesh) {
  double area = 0.0;
  for (const auto& f : mesh.faces) {
    const Vec3& a = mesh.vertices[f[0]];
    area += 0.5 * (mesh.vertices[f[1]] - a).cross(mesh.vertices[f[2]] - a).norm();
  }
  return area;
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
    std::size_t j = i;
    while (j < s.size() && s[j] != ' ' && s[j] != '\t') ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

double parse_real(std::string_view s, int line) {
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw Error(ErrorCode::InvalidMesh,
                "OBJ line " + std::to_string(line) + ": bad number '" + std::string(s) + "'");
  }
  return value;
}

int parse_index(std::string_view s, int count, int line) {
  int value = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size() || value == 0) {
    throw Error(ErrorCode::InvalidMesh,
                "OBJ line " + std::to_string(line) + ": bad index '" + std::string(s) + "'");
  }
  // OBJ indices are 1-based; negative values count back from the end.
  return value > 0 ? value - 1 : count + value;
}

}  // namespace

Mesh parse_obj(const std::string& text) {
  Mesh mesh;
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  int current_material = -1;
  bool any_uv_face = false;
  bool any_plain_face = false;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    auto tok = split_ws(line);
    const auto& kw = tok[0];
    if (kw == "v") {
      if (tok.size() < 4) throw Error(ErrorCode::InvalidMesh, "OBJ line " + std::to_string(line_no) + ": short vertex");
      mesh.vertices.emplace_back(parse_real(tok[1], line_no), parse_real(tok[2], line_no),
                                 parse_real(tok[3], line_no));
    } else if (kw == "vt") {
      if (tok.size() < 3) throw Error(ErrorCode::InvalidMesh, "OBJ line " + std::to_string(line_no) + ": short texcoord");
      mesh.uvs.emplace_back(parse_real(tok[1], line_no), parse_real(tok[2], line_no));
    } else if (kw == "f") {
      if (tok.size() < 4) throw Error(ErrorCode::InvalidMesh, "OBJ line " + std::to_string(line_no) + ": face with < 3 corners");
      std::vector<int> vi;
      std::vector<int> ti;
      for (std::size_t k = 1; k < tok.size(); ++k) {
        auto corner = tok[k];
        auto s1 = corner.find('/');
        vi.push_back(parse_index(corner.substr(0, s1), static_cast<int>(mesh.vertices.size()), line_no));
        if (s1 != std::string_view::npos) {
          auto rest = corner.substr(s1 + 1);
          auto s2 = rest.find('/');
          auto vt = rest.substr(0, s2);
          if (!vt.empty()) ti.push_back(parse_index(vt, static_cast<int>(mesh.uvs.size()), line_no));
        }
      }
      const bool with_uv = ti.size() == vi.size();
      if (!ti.empty() && !with_uv) {
        throw Error(ErrorCode::InvalidMesh, "OBJ line " + std::to_string(line_no) + ": mixed texcoord corners");
      }
      (with_uv ? any_uv_face : any_plain_face) = true;
      for (std::size_t k = 1; k + 1 < vi.size(); ++k) {
        mesh.faces.push_back({vi[0], vi[k], vi[k + 1]});
        if (with_uv) mesh.face_uvs.push_back({ti[0], ti[k], ti[k + 1]});
        mesh.face_materials.push_back(current_material);
      }
    } else if (kw == "mtllib" && tok.size() >= 2) {
      mesh.material_library = std::string(trim(line.substr(6)));
    } else if (kw == "usemtl" && tok.size() >= 2) {
      std::string name(trim(line.substr(6)));
      auto it = std::find(mesh.materials.begin(), mesh.materials.end(), name);
      if (it == mesh.materials.end()) {
        mesh.materials.push_back(name);
        current_material = static_cast<int>(mesh.materials.size()) - 1;
      } else {
        current_material = static_cast<int>(it - mesh.materials.begin());
      }
    }
    // vn, o, g, s, l and friends are ignored.
  }
  if (any_uv_face && any_plain_face) {
    throw Error(ErrorCode::InvalidMesh, "OBJ mixes faces with and without texcoords");
  }
  if (mesh.materials.empty()) mesh.face_materials.clear();
  validate_mesh(mesh);
  return mesh;
}

Mesh read_obj(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return parse_obj(buf.str());
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

std::string format_double(double value) {
  if (value == 0.0) return "0";  // folds -0
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, ptr);
}

std::string format_obj(const Mesh& mesh) {
  std::string out;
  if (!mesh.material_library.empty()) out += "mtllib " + mesh.material_library + "\n";
  for (const auto& v : mesh.vertices) {
    out += "v " + format_double(v.x()) + " " + format_double(v.y()) + " " + format_double(v.z()) + "\n";
  }
  for (const auto& t : mesh.uvs) {
    out += "vt " + format_double(t.x()) + " " + format_double(t.y()) + "\n";
  }
  int active = -1;
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    if (mesh.has_materials() && mesh.face_materials[f] != active) {
      active = mesh.face_materials[f];
      if (active >= 0) out += "usemtl " + mesh.materials[active] + "\n";
    }
    out += "f";
    for (int k = 0; k < 3; ++k) {
      out += " " + std::to_string(mesh.faces[f][k] + 1);
      if (mesh.has_uvs()) out += "/" + std::to_string(mesh.face_uvs[f][k] + 1);
    }
    out += "\n";
  }
  return out;
}

void write_obj(const Mesh& mesh, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << format_obj(mesh);
}

}  // namespace artkit
