#pragma once

#include "artkit/mesh.hpp"
#include "artkit/voxel_grid.hpp"

#include <array>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace artkit {

enum class JointType { Fixed, Revolute, Prismatic, Floating };

std::string to_string(JointType type);

/// Maps the metadata vocabulary (fixed, revolute, prismatic, free, hinge, rigid)
/// onto URDF joint types.
JointType joint_type_from_name(std::string_view name);

struct PartRecord {
  std::string id;
  std::string type_name;
  JointType type = JointType::Fixed;
  std::optional<std::string> parent;
  std::optional<std::array<int, 3>> center;  // [0, 200], 0.005 per step
  std::optional<std::array<int, 3>> axis;    // [0, 100]
  std::optional<std::array<int, 2>> limits;  // 100 = pi rad or the object scale
  std::string material;
  std::optional<double> density;             // g/cm^3
  std::optional<double> youngs_modulus_gpa;
  std::optional<double> friction;
  std::string tokens;                        // raw parts_voxels entry
};

struct AssetMetadata {
  std::string name;
  double scale_cm = 0.0;          // largest extent of the object
  std::vector<PartRecord> parts;  // document order

  const PartRecord* find(const std::string& id) const;
};

/// Strict reader for the object/parts/voxels JSON document.
AssetMetadata parse_metadata(std::string_view json_text);
AssetMetadata read_metadata(const std::filesystem::path& path);

inline constexpr double kCenterStep = 0.005;

struct JointLimits {
  double lower = 0.0;
  double upper = 0.0;
};

struct Joint {
  JointType type = JointType::Fixed;
  Vec3 origin = Vec3::Zero();  // mesh frame
  Vec3 axis = Vec3::UnitX();
  std::optional<JointLimits> limits;
  bool has_origin = false;     // false: the record carried no center
};

/// Quantized center in the normalized frame (before the inverse transform).
Vec3 center_to_normalized(const std::array<int, 3>& center);

Joint decode_kinematics(const PartRecord& part, double scale_cm,
                        const NormalizationTransform& transform = NormalizationTransform::identity());

struct KinematicNode {
  std::string id;
  std::optional<std::string> parent;
  std::vector<std::string> children;
  Joint joint;             // joint connecting this node to its parent; unused for the root
  Vec3 frame = Vec3::Zero();  // link frame in the mesh frame
};

struct KinematicTree {
  std::string root;
  std::vector<KinematicNode> nodes;  // metadata order

  const KinematicNode& node(const std::string& id) const;
  int depth() const;
};

KinematicTree build_kinematic_tree(const AssetMetadata& meta,
                                   const NormalizationTransform& transform = NormalizationTransform::identity());

struct LinkAsset {
  std::string mesh_file;    // relative path written into the URDF
  std::optional<Mesh> mesh;  // geometry for mass and inertia (mesh frame)
};

struct UrdfOptions {
  double default_density = 1.0;   // g/cm^3
  double default_friction = 0.5;
  double effort = 100.0;
  double velocity = 1.0;
};

/// Deterministic URDF text. Throws MissingMesh when a part has no asset.
std::string emit_urdf(const AssetMetadata& meta, const KinematicTree& tree,
                      const std::map<std::string, LinkAsset>& assets, const UrdfOptions& options = {});

std::string link_name(const std::string& part_id);
std::string joint_name(const std::string& part_id);

// Reader for our own output, used for validation and round-trip checks.
struct UrdfLink {
  std::string name;
  std::string mesh_file;
  Vec3 visual_offset = Vec3::Zero();  // visual origin, rotation ignored
  double mass = 0.0;
};

struct UrdfJoint {
  std::string name;
  std::string type;
  std::string parent;
  std::string child;
  Vec3 origin = Vec3::Zero();  // relative to the parent link
  Vec3 axis = Vec3::UnitX();
  std::optional<JointLimits> limits;
};

struct UrdfModel {
  std::string name;
  std::vector<UrdfLink> links;
  std::vector<UrdfJoint> joints;

  /// Link frame positions accumulated from the root.
  std::map<std::string, Vec3> link_frames() const;
};

/// Throws InvalidUrdf on malformed XML or missing required attributes.
UrdfModel parse_urdf(const std::string& xml);

/// Structural problems: duplicate names, dangling links, several roots, cycles,
/// non-unit axes, missing or inverted limits. Empty when valid.
std::vector<std::string> validate_urdf(const std::string& xml);

}  // namespace artkit
