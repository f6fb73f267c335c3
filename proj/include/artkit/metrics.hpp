#pragma once

#include "artkit/mesh.hpp"
#include "artkit/urdf.hpp"
#include "artkit/voxel_grid.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace artkit {

struct EvalPart {
  std::string id;
  Mesh mesh;                         // asset frame, meters
  JointType type = JointType::Fixed;  // joint to the parent; fixed for the root
  Vec3 axis = Vec3::UnitX();
  Vec3 origin = Vec3::Zero();
};

struct EvalAsset {
  std::string name;
  std::string category;
  std::vector<EvalPart> parts;
};

inline bool is_moving(JointType t) { return t == JointType::Revolute || t == JointType::Prismatic; }

/// Metadata JSON plus part_<id>.obj files in `parts_dir`. Joint centers are
/// decoded against the normalization of the assembled part meshes.
EvalAsset load_metadata_asset(const std::filesystem::path& metadata, const std::filesystem::path& parts_dir);

/// URDF with mesh references relative to the file.
EvalAsset load_urdf_asset(const std::filesystem::path& urdf);

struct Matching {
  std::vector<std::pair<int, int>> pairs;  // (pred index, gt index)
  std::vector<int> unmatched_pred;
  std::vector<int> unmatched_gt;
};

/// Maximum total IoU one-to-one assignment.
Matching match_parts(const Eigen::MatrixXd& iou);

/// Angle between unsigned axes, in [0, pi/2].
double axis_angle_error(const Vec3& a, const Vec3& b);

/// Distance from `point` to the line through `origin` along `axis`.
double point_line_distance(const Vec3& point, const Vec3& origin, const Vec3& axis);

struct GeometryOptions {
  int resolution = kDefaultResolution;
  int samples = 4096;
  std::uint64_t seed = 0;
};

/// Area-weighted uniform samples on the surface.
std::vector<Vec3> sample_surface(const Mesh& mesh, int count, std::uint64_t seed);

/// Symmetric mean nearest-neighbor distance, 0.5 (a->b + b->a).
double chamfer_distance(const std::vector<Vec3>& a, const std::vector<Vec3>& b);

struct PartGeometry {
  double iou = 0.0;
  double chamfer = 0.0;
};

/// IoU and Chamfer distance in the frame given by `shared`.
PartGeometry part_geometry_metrics(const Mesh& pred, const Mesh& gt, const NormalizationTransform& shared,
                                   const GeometryOptions& options = {});

struct MatchRecord {
  std::string pred_id;
  std::string gt_id;
  double iou = 0.0;
  double chamfer = 0.0;
  bool type_match = false;
  std::optional<double> axis_error;    // both joints moving
  std::optional<double> origin_error;
  std::optional<double> origin_line_error;
};

struct AssetReport {
  std::string name;
  std::string category;
  double type_accuracy = 0.0;
  double axis_error = 0.0;     // radians, mean over moving pairs
  double origin_error = 0.0;   // meters
  double origin_line_error = 0.0;
  double iou = 0.0;
  double chamfer = 0.0;        // normalized units
  int moving_pairs = 0;
  std::vector<MatchRecord> matches;
  std::vector<std::string> unmatched_pred;
  std::vector<std::string> unmatched_gt;
  std::vector<std::string> warnings;
};

AssetReport evaluate(const EvalAsset& pred, const EvalAsset& gt, const GeometryOptions& options = {});

struct MetricMeans {
  double type_accuracy = 0.0;
  double axis_error = 0.0;
  double origin_error = 0.0;
  double iou = 0.0;
  double chamfer = 0.0;
  int count = 0;
};

struct BatchReport {
  std::vector<AssetReport> assets;
  MetricMeans mean;
  std::map<std::string, MetricMeans> by_category;
};

BatchReport aggregate(std::vector<AssetReport> assets);

std::string report_json(const BatchReport& report);
/// Aligned columns in the order Type, Axis, Origin, IoU, CD.
std::string report_text(const BatchReport& report);

}  // namespace artkit
