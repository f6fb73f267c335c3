#include "artkit/urdf.hpp"

#include "artkit/error.hpp"
#include "artkit/hull.hpp"

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include <json.hpp>

#include <cmath>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

namespace artkit {

using json = nlohmann::ordered_json;

std::string to_string(JointType type) {
  switch (type) {
    case JointType::Fixed: return "fixed";
    case JointType::Revolute: return "revolute";
    case JointType::Prismatic: return "prismatic";
    case JointType::Floating: return "floating";
  }
  return "fixed";
}

JointType joint_type_from_name(std::string_view name) {
  if (name == "fixed" || name == "rigid") return JointType::Fixed;
  if (name == "revolute" || name == "hinge" || name == "continuous") return JointType::Revolute;
  if (name == "prismatic") return JointType::Prismatic;
  if (name == "free" || name == "floating") return JointType::Floating;
  throw Error(ErrorCode::SchemaViolation, "unknown joint type '" + std::string(name) + "'");
}

const PartRecord* AssetMetadata::find(const std::string& id) const {
  for (const auto& p : parts)
    if (p.id == id) return &p;
  return nullptr;
}

namespace {

[[noreturn]] void schema(const std::string& path, const std::string& why) {
  throw Error(ErrorCode::SchemaViolation, path + ": " + why);
}

const json& require(const json& obj, const std::string& key, const std::string& path) {
  auto it = obj.find(key);
  if (it == obj.end()) schema(path + "." + key, "missing");
  return *it;
}

double number(const json& v, const std::string& path) {
  if (!v.is_number()) schema(path, "expected a number");
  return v.get<double>();
}

int integer(const json& v, const std::string& path) {
  const double d = number(v, path);
  if (std::floor(d) != d || std::abs(d) > 1e9) schema(path, "expected an integer");
  return static_cast<int>(d);
}

template <std::size_t N>
std::array<int, N> int_array(const json& v, const std::string& path, int lo, int hi, bool ranged) {
  if (!v.is_array() || v.size() != N) schema(path, "expected an array of " + std::to_string(N) + " integers");
  std::array<int, N> out{};
  for (std::size_t i = 0; i < N; ++i) {
    const std::string p = path + "[" + std::to_string(i) + "]";
    out[i] = integer(v[i], p);
    if (ranged && (out[i] < lo || out[i] > hi)) {
      throw Error(ErrorCode::RangeViolation,
                  p + ": " + std::to_string(out[i]) + " outside [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
    }
  }
  return out;
}

// Leading number of a string such as "1.2 g/cm^3"; returns the remainder as the unit.
std::pair<double, std::string> number_with_unit(const json& v, const std::string& path) {
  if (v.is_number()) return {v.get<double>(), ""};
  if (!v.is_string()) schema(path, "expected a number or a string with a unit");
  const std::string s = v.get<std::string>();
  std::size_t used = 0;
  double value = 0.0;
  try {
    value = std::stod(s, &used);
  } catch (const std::exception&) {
    schema(path, "cannot read a number from '" + s + "'");
  }
  std::string unit = s.substr(used);
  unit.erase(0, unit.find_first_not_of(' '));
  unit.erase(unit.find_last_not_of(' ') + 1);
  return {value, unit};
}

double density_g_cm3(const json& v, const std::string& path) {
  auto [value, unit] = number_with_unit(v, path);
  double out = value;
  if (unit.empty() || unit == "g/cm^3" || unit == "g/cm3" || unit == "g/cc") {
    out = value;
  } else if (unit == "kg/m^3" || unit == "kg/m3") {
    out = value / 1000.0;
  } else {
    schema(path, "unsupported density unit '" + unit + "'");
  }
  if (!(out > 0.0) || !std::isfinite(out)) throw Error(ErrorCode::RangeViolation, path + ": density must be positive");
  return out;
}

}  // namespace

AssetMetadata parse_metadata(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    schema("$", std::string("not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) schema("$", "expected an object");
  AssetMetadata meta;

  const json& obj = require(doc, "object_captions", "$");
  if (!obj.is_object()) schema("$.object_captions", "expected an object");
  const json& name = require(obj, "name", "$.object_captions");
  if (!name.is_string()) schema("$.object_captions.name", "expected a string");
  meta.name = name.get<std::string>();
  meta.scale_cm = number(require(obj, "scale", "$.object_captions"), "$.object_captions.scale");
  if (!(meta.scale_cm > 0.0) || !std::isfinite(meta.scale_cm)) {
    throw Error(ErrorCode::RangeViolation, "$.object_captions.scale: must be positive");
  }

  const json& parts = require(doc, "parts_captions", "$");
  if (!parts.is_object() || parts.empty()) schema("$.parts_captions", "expected a non-empty object");
  const json& voxels = require(doc, "parts_voxels", "$");
  if (!voxels.is_object()) schema("$.parts_voxels", "expected an object");

  std::vector<std::string> ids;
  for (auto it = parts.begin(); it != parts.end(); ++it) ids.push_back(it.key());

  for (const auto& id : ids) {
    const std::string path = "$.parts_captions." + id;
    const json& rec = parts.at(id);
    if (!rec.is_object()) schema(path, "expected an object");
    PartRecord part;
    part.id = id;
    const json& type = require(rec, "type", path);
    if (!type.is_string()) schema(path + ".type", "expected a string");
    part.type_name = type.get<std::string>();
    try {
      part.type = joint_type_from_name(part.type_name);
    } catch (const Error&) {
      schema(path + ".type", "unknown joint type '" + part.type_name + "'");
    }
    if (auto it = rec.find("parent"); it != rec.end() && !it->is_null()) {
      if (!it->is_string()) schema(path + ".parent", "expected a string");
      part.parent = it->get<std::string>();
    }
    if (auto it = rec.find("center"); it != rec.end()) part.center = int_array<3>(*it, path + ".center", 0, 200, true);
    if (auto it = rec.find("axis"); it != rec.end()) part.axis = int_array<3>(*it, path + ".axis", 0, 100, true);
    if (auto it = rec.find("limits"); it != rec.end()) part.limits = int_array<2>(*it, path + ".limits", 0, 0, false);
    if (auto it = rec.find("material"); it != rec.end()) {
      if (!it->is_string()) schema(path + ".material", "expected a string");
      part.material = it->get<std::string>();
    }
    if (auto it = rec.find("density"); it != rec.end()) part.density = density_g_cm3(*it, path + ".density");
    if (auto it = rec.find("Young's Modulus (GPa)"); it != rec.end()) {
      part.youngs_modulus_gpa = number_with_unit(*it, path + ".Young's Modulus (GPa)").first;
    }
    if (auto it = rec.find("friction"); it != rec.end()) {
      part.friction = number(*it, path + ".friction");
      if (*part.friction < 0.0) throw Error(ErrorCode::RangeViolation, path + ".friction: must be non-negative");
    }
    if (auto it = voxels.find(id); it != voxels.end()) {
      if (!it->is_string()) schema("$.parts_voxels." + id, "expected a string");
      part.tokens = it->get<std::string>();
    }
    meta.parts.push_back(std::move(part));
  }

  int roots = 0;
  for (const auto& p : meta.parts) {
    if (!p.parent) {
      ++roots;
    } else if (!meta.find(*p.parent)) {
      throw Error(ErrorCode::UnknownParent, "part " + p.id + " names unknown parent '" + *p.parent + "'");
    }
  }
  if (roots > 1) throw Error(ErrorCode::MultipleRoots, std::to_string(roots) + " parts have no parent");
  return meta;
}

AssetMetadata read_metadata(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_metadata(ss.str());
}

Vec3 center_to_normalized(const std::array<int, 3>& c) {
  return Vec3(c[0] * kCenterStep, c[1] * kCenterStep, c[2] * kCenterStep);
}

Joint decode_kinematics(const PartRecord& part, double scale_cm, const NormalizationTransform& transform) {
  Joint j;
  j.type = part.type;
  if (part.center) {
    j.origin = transform.invert(center_to_normalized(*part.center));
    j.has_origin = true;
  }
  if (j.type == JointType::Fixed || j.type == JointType::Floating) return j;

  const std::string where = "part " + part.id;
  if (!part.axis) throw Error(ErrorCode::ZeroAxis, where + ": moving joint without an axis");
  const Vec3 raw((*part.axis)[0], (*part.axis)[1], (*part.axis)[2]);
  if (raw.norm() == 0.0) throw Error(ErrorCode::ZeroAxis, where + ": axis is [0, 0, 0]");
  j.axis = raw.normalized();
  if (!part.limits) throw Error(ErrorCode::InvalidLimits, where + ": moving joint without limits");
  double lo = (*part.limits)[0];
  double hi = (*part.limits)[1];
  if (lo > hi) {
    throw Error(ErrorCode::InvalidLimits,
                where + ": lower limit " + std::to_string((*part.limits)[0]) + " exceeds upper " +
                    std::to_string((*part.limits)[1]));
  }
  // Axes are quantized non-negative, so motion only in the negative sense
  // means the true axis points the other way.
  if (hi <= 0.0 && lo < 0.0) {
    j.axis = -j.axis;
    std::swap(lo, hi);
    lo = -lo;
    hi = -hi;
  }
  const double unit = j.type == JointType::Revolute ? M_PI / 100.0 : scale_cm / 100.0 / 100.0;
  j.limits = JointLimits{lo * unit, hi * unit};
  return j;
}

const KinematicNode& KinematicTree::node(const std::string& id) const {
  for (const auto& n : nodes)
    if (n.id == id) return n;
  throw Error(ErrorCode::UnknownParent, "no part '" + id + "' in the tree");
}

int KinematicTree::depth() const {
  int best = 0;
  for (const auto& n : nodes) {
    int d = 0;
    const KinematicNode* cur = &n;
    while (cur->parent) {
      cur = &node(*cur->parent);
      ++d;
    }
    best = std::max(best, d);
  }
  return best;
}

KinematicTree build_kinematic_tree(const AssetMetadata& meta, const NormalizationTransform& transform) {
  // Cycles first: a document whose parts all point at each other has no root.
  for (const auto& p : meta.parts) {
    std::vector<std::string> path = {p.id};
    const PartRecord* cur = &p;
    while (cur->parent) {
      const PartRecord* next = meta.find(*cur->parent);
      if (!next) throw Error(ErrorCode::UnknownParent, "part " + cur->id + " names unknown parent '" + *cur->parent + "'");
      auto seen = std::find(path.begin(), path.end(), next->id);
      if (seen != path.end()) {
        std::string cycle;
        for (auto it = seen; it != path.end(); ++it) cycle += *it + " -> ";
        throw Error(ErrorCode::CycleDetected, "parent chain loops: " + cycle + next->id);
      }
      path.push_back(next->id);
      cur = next;
    }
  }
  KinematicTree tree;
  for (const auto& p : meta.parts) {
    if (!p.parent) {
      if (!tree.root.empty()) throw Error(ErrorCode::MultipleRoots, "parts " + tree.root + " and " + p.id + " have no parent");
      tree.root = p.id;
    }
  }
  if (tree.root.empty()) throw Error(ErrorCode::CycleDetected, "no root part");

  for (const auto& p : meta.parts) {
    KinematicNode n;
    n.id = p.id;
    n.parent = p.parent;
    if (p.parent) n.joint = decode_kinematics(p, meta.scale_cm, transform);
    tree.nodes.push_back(std::move(n));
  }
  for (auto& n : tree.nodes) {
    for (const auto& c : tree.nodes)
      if (c.parent && *c.parent == n.id) n.children.push_back(c.id);
  }
  // Frames follow parent before child.
  std::function<void(const std::string&, const Vec3&)> place = [&](const std::string& id, const Vec3& parent_frame) {
    for (auto& n : tree.nodes) {
      if (n.id != id) continue;
      n.frame = n.parent && n.joint.has_origin ? n.joint.origin : parent_frame;
      if (!n.parent) n.frame = Vec3::Zero();
      const Vec3 frame = n.frame;
      const auto children = n.children;
      for (const auto& c : children) place(c, frame);
      return;
    }
  };
  place(tree.root, Vec3::Zero());
  return tree;
}

std::string link_name(const std::string& part_id) { return "part_" + part_id; }
std::string joint_name(const std::string& part_id) { return "joint_" + part_id; }

namespace {

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string comment_safe(std::string s) {
  for (std::size_t pos; (pos = s.find("--")) != std::string::npos;) s.replace(pos, 2, "- -");
  if (!s.empty() && s.back() == '-') s += ' ';
  return s;
}

std::string vec(const Vec3& v) {
  return format_double(v.x()) + " " + format_double(v.y()) + " " + format_double(v.z());
}

struct MassProps {
  double mass = 0.0;
  Vec3 center = Vec3::Zero();
  Vec3 inertia = Vec3::Zero();
};

MassProps mass_props(const Mesh& mesh, double density_g_cm3) {
  MassProps m;
  const ConvexHull hull = convex_hull(mesh.vertices);
  const double volume = hull.volume();
  m.mass = density_g_cm3 * 1000.0 * volume;
  const Aabb box = bounding_box(mesh);
  m.center = box.center();
  const Vec3 e = box.extent();
  m.inertia = Vec3(e.y() * e.y() + e.z() * e.z(), e.x() * e.x() + e.z() * e.z(), e.x() * e.x() + e.y() * e.y()) *
              (m.mass / 12.0);
  return m;
}

}  // namespace

std::string emit_urdf(const AssetMetadata& meta, const KinematicTree& tree, const std::map<std::string, LinkAsset>& assets,
                      const UrdfOptions& options) {
  std::string out = "<?xml version=\"1.0\"?>\n";
  out += "<robot name=\"" + xml_escape(meta.name) + "\">\n";
  for (const auto& n : tree.nodes) {
    auto it = assets.find(n.id);
    if (it == assets.end() || it->second.mesh_file.empty()) {
      throw Error(ErrorCode::MissingMesh, "no mesh file for part " + n.id);
    }
    const LinkAsset& asset = it->second;
    const PartRecord* rec = meta.find(n.id);
    const double density = rec && rec->density ? *rec->density : options.default_density;
    const double friction = rec && rec->friction ? *rec->friction : options.default_friction;

    out += "  <link name=\"" + xml_escape(link_name(n.id)) + "\">\n";
    if (rec && (!rec->material.empty() || rec->youngs_modulus_gpa)) {
      std::string note;
      if (!rec->material.empty()) note += "material: " + rec->material;
      if (rec->youngs_modulus_gpa) {
        if (!note.empty()) note += "; ";
        note += "youngs_modulus_gpa: " + format_double(*rec->youngs_modulus_gpa);
      }
      out += "    <!-- " + comment_safe(note) + " -->\n";
    }
    if (asset.mesh) {
      const MassProps mp = mass_props(*asset.mesh, density);
      out += "    <inertial>\n";
      out += "      <origin xyz=\"" + vec(mp.center - n.frame) + "\" rpy=\"0 0 0\"/>\n";
      out += "      <mass value=\"" + format_double(mp.mass) + "\"/>\n";
      out += "      <inertia ixx=\"" + format_double(mp.inertia.x()) + "\" ixy=\"0\" ixz=\"0\" iyy=\"" +
             format_double(mp.inertia.y()) + "\" iyz=\"0\" izz=\"" + format_double(mp.inertia.z()) + "\"/>\n";
      out += "    </inertial>\n";
    }
    const std::string geometry = "      <origin xyz=\"" + vec(-n.frame) + "\" rpy=\"0 0 0\"/>\n" +
                                 "      <geometry>\n        <mesh filename=\"" + xml_escape(asset.mesh_file) +
                                 "\"/>\n      </geometry>\n";
    out += "    <visual>\n" + geometry + "    </visual>\n";
    out += "    <collision>\n" + geometry + "    </collision>\n";
    out += "  </link>\n";
    out += "  <gazebo reference=\"" + xml_escape(link_name(n.id)) + "\">\n";
    out += "    <mu1>" + format_double(friction) + "</mu1>\n";
    out += "    <mu2>" + format_double(friction) + "</mu2>\n";
    out += "  </gazebo>\n";
  }
  for (const auto& n : tree.nodes) {
    if (!n.parent) continue;
    const KinematicNode& parent = tree.node(*n.parent);
    out += "  <joint name=\"" + xml_escape(joint_name(n.id)) + "\" type=\"" + to_string(n.joint.type) + "\">\n";
    out += "    <parent link=\"" + xml_escape(link_name(parent.id)) + "\"/>\n";
    out += "    <child link=\"" + xml_escape(link_name(n.id)) + "\"/>\n";
    out += "    <origin xyz=\"" + vec(n.frame - parent.frame) + "\" rpy=\"0 0 0\"/>\n";
    if (n.joint.type == JointType::Revolute || n.joint.type == JointType::Prismatic) {
      out += "    <axis xyz=\"" + vec(n.joint.axis) + "\"/>\n";
      out += "    <limit lower=\"" + format_double(n.joint.limits->lower) + "\" upper=\"" +
             format_double(n.joint.limits->upper) + "\" effort=\"" + format_double(options.effort) +
             "\" velocity=\"" + format_double(options.velocity) + "\"/>\n";
    }
    out += "  </joint>\n";
  }
  out += "</robot>\n";
  return out;
}

std::map<std::string, Vec3> UrdfModel::link_frames() const {
  std::map<std::string, Vec3> frames;
  std::map<std::string, const UrdfJoint*> by_child;
  for (const auto& j : joints) by_child[j.child] = &j;
  std::function<Vec3(const std::string&, int)> frame = [&](const std::string& link, int guard) -> Vec3 {
    if (auto f = frames.find(link); f != frames.end()) return f->second;
    auto it = by_child.find(link);
    if (it == by_child.end() || guard > static_cast<int>(joints.size())) return Vec3::Zero();
    const Vec3 v = frame(it->second->parent, guard + 1) + it->second->origin;
    frames[link] = v;
    return v;
  };
  for (const auto& l : links) frames[l.name] = frame(l.name, 0);
  return frames;
}

namespace {

namespace pt = boost::property_tree;

Vec3 parse_vec(const std::string& text, const std::string& what) {
  std::istringstream in(text);
  Vec3 v;
  if (!(in >> v.x() >> v.y() >> v.z())) throw Error(ErrorCode::InvalidUrdf, what + ": expected three numbers");
  std::string rest;
  if (in >> rest) throw Error(ErrorCode::InvalidUrdf, what + ": trailing data");
  return v;
}

double parse_num(const std::string& text, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorCode::InvalidUrdf, what + ": expected a number, got '" + text + "'");
  }
}

}  // namespace

UrdfModel parse_urdf(const std::string& xml) {
  pt::ptree doc;
  try {
    std::istringstream in(xml);
    pt::read_xml(in, doc);
  } catch (const pt::xml_parser_error& e) {
    throw Error(ErrorCode::InvalidUrdf, std::string("malformed XML: ") + e.what());
  }
  const auto robot = doc.get_child_optional("robot");
  if (!robot) throw Error(ErrorCode::InvalidUrdf, "missing <robot> element");
  UrdfModel model;
  model.name = robot->get<std::string>("<xmlattr>.name", "");
  for (const auto& [tag, node] : *robot) {
    if (tag == "link") {
      UrdfLink link;
      link.name = node.get<std::string>("<xmlattr>.name", "");
      if (link.name.empty()) throw Error(ErrorCode::InvalidUrdf, "link without a name");
      link.mesh_file = node.get<std::string>("visual.geometry.mesh.<xmlattr>.filename", "");
      if (auto o = node.get_optional<std::string>("visual.origin.<xmlattr>.xyz")) {
        link.visual_offset = parse_vec(*o, link.name + " visual origin");
      }
      if (auto m = node.get_optional<std::string>("inertial.mass.<xmlattr>.value")) link.mass = parse_num(*m, link.name + " mass");
      model.links.push_back(std::move(link));
    } else if (tag == "joint") {
      UrdfJoint j;
      j.name = node.get<std::string>("<xmlattr>.name", "");
      j.type = node.get<std::string>("<xmlattr>.type", "");
      j.parent = node.get<std::string>("parent.<xmlattr>.link", "");
      j.child = node.get<std::string>("child.<xmlattr>.link", "");
      if (j.name.empty() || j.type.empty() || j.parent.empty() || j.child.empty()) {
        throw Error(ErrorCode::InvalidUrdf, "joint '" + j.name + "' lacks name, type, parent or child");
      }
      if (auto o = node.get_optional<std::string>("origin.<xmlattr>.xyz")) j.origin = parse_vec(*o, j.name + " origin");
      if (auto a = node.get_optional<std::string>("axis.<xmlattr>.xyz")) j.axis = parse_vec(*a, j.name + " axis");
      if (auto lim = node.get_child_optional("limit")) {
        JointLimits l;
        l.lower = parse_num(lim->get<std::string>("<xmlattr>.lower", "0"), j.name + " lower");
        l.upper = parse_num(lim->get<std::string>("<xmlattr>.upper", "0"), j.name + " upper");
        j.limits = l;
      }
      model.joints.push_back(std::move(j));
    }
  }
  return model;
}

std::vector<std::string> validate_urdf(const std::string& xml) {
  std::vector<std::string> problems;
  UrdfModel model;
  try {
    model = parse_urdf(xml);
  } catch (const Error& e) {
    return {e.what()};
  }
  if (model.name.empty()) problems.push_back("robot has no name");
  if (model.links.empty()) problems.push_back("robot has no links");
  std::set<std::string> links, joints;
  for (const auto& l : model.links) {
    if (!links.insert(l.name).second) problems.push_back("duplicate link name '" + l.name + "'");
    if (l.mesh_file.empty()) problems.push_back("link '" + l.name + "' has no mesh");
    if (l.mass < 0.0) problems.push_back("link '" + l.name + "' has negative mass");
  }
  std::map<std::string, std::string> parent_of;
  static const std::set<std::string> kTypes = {"fixed", "revolute", "prismatic", "floating", "continuous", "planar"};
  for (const auto& j : model.joints) {
    if (!joints.insert(j.name).second) problems.push_back("duplicate joint name '" + j.name + "'");
    if (!kTypes.count(j.type)) problems.push_back("joint '" + j.name + "' has unknown type '" + j.type + "'");
    if (!links.count(j.parent)) problems.push_back("joint '" + j.name + "' parent link '" + j.parent + "' missing");
    if (!links.count(j.child)) problems.push_back("joint '" + j.name + "' child link '" + j.child + "' missing");
    if (!parent_of.emplace(j.child, j.parent).second) problems.push_back("link '" + j.child + "' has several parents");
    if (j.type == "revolute" || j.type == "prismatic") {
      if (std::abs(j.axis.norm() - 1.0) > 1e-6) problems.push_back("joint '" + j.name + "' axis is not unit length");
      if (!j.limits) {
        problems.push_back("joint '" + j.name + "' needs a <limit>");
      } else if (j.limits->lower > j.limits->upper) {
        problems.push_back("joint '" + j.name + "' lower limit exceeds upper");
      }
    }
  }
  int roots = 0;
  for (const auto& l : model.links) roots += parent_of.count(l.name) ? 0 : 1;
  if (!model.links.empty() && roots != 1) problems.push_back(std::to_string(roots) + " root links (expected 1)");
  for (const auto& [child, unused] : parent_of) {
    (void)unused;
    std::set<std::string> seen = {child};
    for (auto it = parent_of.find(child); it != parent_of.end(); it = parent_of.find(it->second)) {
      if (!seen.insert(it->second).second) {
        problems.push_back("joint chain through '" + child + "' forms a cycle");
        break;
      }
    }
  }
  return problems;
}

}  // namespace artkit
