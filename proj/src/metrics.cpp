#include "artkit/metrics.hpp"

#include "artkit/assignment.hpp"
#include "artkit/error.hpp"
#include "artkit/kdtree.hpp"
#include "artkit/random.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace artkit {

EvalAsset load_metadata_asset(const std::filesystem::path& metadata, const std::filesystem::path& parts_dir) {
  const AssetMetadata meta = read_metadata(metadata);
  EvalAsset asset;
  asset.name = meta.name;
  Aabb box;
  std::map<std::string, Mesh> meshes;
  for (const auto& p : meta.parts) {
    Mesh m = read_obj(parts_dir / ("part_" + p.id + ".obj"));
    for (const auto& v : m.vertices) box.extend(v);
    meshes[p.id] = std::move(m);
  }
  const KinematicTree tree = build_kinematic_tree(meta, fit_normalization(box));
  for (const auto& n : tree.nodes) {
    EvalPart part;
    part.id = n.id;
    part.mesh = std::move(meshes[n.id]);
    part.origin = n.frame;
    if (n.parent) {
      part.type = n.joint.type;
      part.axis = n.joint.axis;
    }
    asset.parts.push_back(std::move(part));
  }
  return asset;
}

EvalAsset load_urdf_asset(const std::filesystem::path& urdf) {
  std::ifstream in(urdf, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + urdf.string());
  std::stringstream ss;
  ss << in.rdbuf();
  const UrdfModel model = parse_urdf(ss.str());
  const auto frames = model.link_frames();
  EvalAsset asset;
  asset.name = model.name;
  for (const auto& link : model.links) {
    EvalPart part;
    part.id = link.name.rfind("part_", 0) == 0 ? link.name.substr(5) : link.name;
    if (link.mesh_file.empty()) throw Error(ErrorCode::MissingMesh, "link " + link.name + " has no mesh");
    part.mesh = read_obj(urdf.parent_path() / link.mesh_file);
    const Vec3 offset = frames.at(link.name) + link.visual_offset;
    for (auto& v : part.mesh.vertices) v += offset;
    part.origin = frames.at(link.name);
    for (const auto& j : model.joints) {
      if (j.child != link.name) continue;
      part.type = joint_type_from_name(j.type);
      part.axis = j.axis;
    }
    asset.parts.push_back(std::move(part));
  }
  return asset;
}

Matching match_parts(const Eigen::MatrixXd& iou) {
  Matching m;
  const auto rows = solve_assignment(-iou);
  std::vector<bool> gt_used(static_cast<std::size_t>(iou.cols()), false);
  for (int i = 0; i < static_cast<int>(rows.size()); ++i) {
    if (rows[i] < 0) {
      m.unmatched_pred.push_back(i);
    } else {
      m.pairs.emplace_back(i, rows[i]);
      gt_used[rows[i]] = true;
    }
  }
  for (int j = 0; j < static_cast<int>(gt_used.size()); ++j)
    if (!gt_used[j]) m.unmatched_gt.push_back(j);
  return m;
}

double axis_angle_error(const Vec3& a, const Vec3& b) {
  // atan2 keeps full precision near 0 and pi/2, unlike acos of the dot product.
  return std::atan2(a.cross(b).norm(), std::abs(a.dot(b)));
}

double point_line_distance(const Vec3& point, const Vec3& origin, const Vec3& axis) {
  return (point - origin).cross(axis.normalized()).norm();
}

std::vector<Vec3> sample_surface(const Mesh& mesh, int count, std::uint64_t seed) {
  std::vector<double> cumulative;
  cumulative.reserve(mesh.faces.size());
  double total = 0.0;
  for (const auto& f : mesh.faces) {
    total += 0.5 * (mesh.vertices[f[1]] - mesh.vertices[f[0]]).cross(mesh.vertices[f[2]] - mesh.vertices[f[0]]).norm();
    cumulative.push_back(total);
  }
  if (!(total > 0.0)) throw Error(ErrorCode::EmptyGeometry, "mesh has no surface area");
  Rng rng(seed);
  std::vector<Vec3> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    const double pick = rng.uniform() * total;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), pick);
    if (it == cumulative.end()) --it;
    const Face& f = mesh.faces[static_cast<std::size_t>(it - cumulative.begin())];
    const double r1 = std::sqrt(rng.uniform());
    const double r2 = rng.uniform();
    out.push_back((1 - r1) * mesh.vertices[f[0]] + r1 * (1 - r2) * mesh.vertices[f[1]] +
                  r1 * r2 * mesh.vertices[f[2]]);
  }
  return out;
}

double chamfer_distance(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
  if (a.empty() || b.empty()) throw Error(ErrorCode::EmptyGeometry, "chamfer distance needs two non-empty sets");
  auto directed = [](const std::vector<Vec3>& from, const std::vector<Vec3>& to) {
    const KdTree tree(to);
    double sum = 0.0;
    for (const auto& p : from) sum += std::sqrt(tree.nearest(p).squared_distance);
    return sum / static_cast<double>(from.size());
  };
  return 0.5 * (directed(a, b) + directed(b, a));
}

PartGeometry part_geometry_metrics(const Mesh& pred, const Mesh& gt, const NormalizationTransform& shared,
                                   const GeometryOptions& options) {
  if (pred.faces.empty() || gt.faces.empty()) throw Error(ErrorCode::EmptyGeometry, "part has no faces");
  const Mesh p = apply_transform(pred, shared);
  const Mesh g = apply_transform(gt, shared);
  PartGeometry out;
  out.iou = grid_iou(voxelize_mesh(p, options.resolution), voxelize_mesh(g, options.resolution));
  out.chamfer = chamfer_distance(sample_surface(p, options.samples, options.seed),
                                 sample_surface(g, options.samples, options.seed));
  return out;
}

namespace {

Vec3 unit_axis(const EvalPart& part, const std::string& side, std::vector<std::string>& warnings) {
  const double n = part.axis.norm();
  if (n == 0.0) throw Error(ErrorCode::ZeroAxis, side + " part " + part.id + " has a zero axis");
  if (std::abs(n - 1.0) > 1e-6) warnings.push_back(side + " part " + part.id + " axis was not unit length");
  return part.axis / n;
}

}  // namespace

AssetReport evaluate(const EvalAsset& pred, const EvalAsset& gt, const GeometryOptions& options) {
  if (pred.parts.empty() || gt.parts.empty()) throw Error(ErrorCode::EmptyGeometry, "both assets need parts");
  AssetReport r;
  r.name = gt.name.empty() ? pred.name : gt.name;
  r.category = gt.category.empty() ? pred.category : gt.category;

  Aabb box;
  for (const auto* asset : {&pred, &gt})
    for (const auto& part : asset->parts)
      for (const auto& v : part.mesh.vertices) box.extend(v);
  const NormalizationTransform shared = fit_normalization(box);

  std::vector<OccupancyGrid> pred_grids, gt_grids;
  for (const auto& p : pred.parts) pred_grids.push_back(voxelize_mesh(apply_transform(p.mesh, shared), options.resolution));
  for (const auto& g : gt.parts) gt_grids.push_back(voxelize_mesh(apply_transform(g.mesh, shared), options.resolution));
  Eigen::MatrixXd iou(pred.parts.size(), gt.parts.size());
  for (std::size_t i = 0; i < pred.parts.size(); ++i)
    for (std::size_t j = 0; j < gt.parts.size(); ++j) iou(i, j) = grid_iou(pred_grids[i], gt_grids[j]);
  const Matching m = match_parts(iou);

  int type_hits = 0;
  int type_total = 0;
  double axis_sum = 0.0, origin_sum = 0.0, line_sum = 0.0, iou_sum = 0.0, cd_sum = 0.0;
  for (const auto& [pi, gi] : m.pairs) {
    const EvalPart& p = pred.parts[pi];
    const EvalPart& g = gt.parts[gi];
    MatchRecord rec;
    rec.pred_id = p.id;
    rec.gt_id = g.id;
    rec.iou = iou(pi, gi);
    const Mesh pm = apply_transform(p.mesh, shared);
    const Mesh gm = apply_transform(g.mesh, shared);
    rec.chamfer = chamfer_distance(sample_surface(pm, options.samples, options.seed),
                                   sample_surface(gm, options.samples, options.seed));
    rec.type_match = p.type == g.type;
    type_hits += rec.type_match ? 1 : 0;
    ++type_total;
    if (is_moving(p.type) && is_moving(g.type)) {
      const Vec3 pa = unit_axis(p, "predicted", r.warnings);
      const Vec3 ga = unit_axis(g, "ground-truth", r.warnings);
      rec.axis_error = axis_angle_error(pa, ga);
      rec.origin_error = (p.origin - g.origin).norm();
      rec.origin_line_error = point_line_distance(p.origin, g.origin, ga);
      axis_sum += *rec.axis_error;
      origin_sum += *rec.origin_error;
      line_sum += *rec.origin_line_error;
      ++r.moving_pairs;
    }
    iou_sum += rec.iou;
    cd_sum += rec.chamfer;
    r.matches.push_back(std::move(rec));
  }
  for (int gi : m.unmatched_gt) {
    r.unmatched_gt.push_back(gt.parts[gi].id);
    ++type_total;
  }
  for (int pi : m.unmatched_pred) {
    r.unmatched_pred.push_back(pred.parts[pi].id);
    if (is_moving(pred.parts[pi].type)) ++type_total;
  }
  r.type_accuracy = type_total > 0 ? double(type_hits) / type_total : 0.0;
  if (r.moving_pairs > 0) {
    r.axis_error = axis_sum / r.moving_pairs;
    r.origin_error = origin_sum / r.moving_pairs;
    r.origin_line_error = line_sum / r.moving_pairs;
  }
  const double matched = static_cast<double>(m.pairs.size());
  r.iou = iou_sum / matched;
  r.chamfer = cd_sum / matched;
  return r;
}

namespace {

void accumulate(MetricMeans& m, const AssetReport& r) {
  m.type_accuracy += r.type_accuracy;
  m.axis_error += r.axis_error;
  m.origin_error += r.origin_error;
  m.iou += r.iou;
  m.chamfer += r.chamfer;
  ++m.count;
}

void finish(MetricMeans& m) {
  if (m.count == 0) return;
  m.type_accuracy /= m.count;
  m.axis_error /= m.count;
  m.origin_error /= m.count;
  m.iou /= m.count;
  m.chamfer /= m.count;
}

nlohmann::ordered_json means_json(const MetricMeans& m) {
  return {{"type", m.type_accuracy}, {"axis", m.axis_error}, {"origin", m.origin_error},
          {"iou", m.iou},           {"cd", m.chamfer},       {"count", m.count}};
}

std::string fixed(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

}  // namespace

BatchReport aggregate(std::vector<AssetReport> assets) {
  BatchReport b;
  b.assets = std::move(assets);
  for (const auto& r : b.assets) {
    accumulate(b.mean, r);
    accumulate(b.by_category[r.category.empty() ? "uncategorized" : r.category], r);
  }
  finish(b.mean);
  for (auto& [name, m] : b.by_category) finish(m);
  return b;
}

std::string report_json(const BatchReport& report) {
  using json = nlohmann::ordered_json;
  json out;
  out["units"] = {{"axis", "radians"}, {"origin", "meters"}, {"cd", "normalized"}};
  json assets = json::array();
  for (const auto& r : report.assets) {
    json a;
    a["name"] = r.name;
    a["category"] = r.category;
    a["type"] = r.type_accuracy;
    a["axis"] = r.axis_error;
    a["origin"] = r.origin_error;
    a["origin_to_axis_line"] = r.origin_line_error;
    a["iou"] = r.iou;
    a["cd"] = r.chamfer;
    a["moving_pairs"] = r.moving_pairs;
    json matches = json::array();
    for (const auto& m : r.matches) {
      json j = {{"pred", m.pred_id}, {"gt", m.gt_id}, {"iou", m.iou}, {"cd", m.chamfer}, {"type_match", m.type_match}};
      if (m.axis_error) j["axis"] = *m.axis_error;
      if (m.origin_error) j["origin"] = *m.origin_error;
      if (m.origin_line_error) j["origin_to_axis_line"] = *m.origin_line_error;
      matches.push_back(j);
    }
    a["matches"] = matches;
    a["unmatched_pred"] = r.unmatched_pred;
    a["unmatched_gt"] = r.unmatched_gt;
    a["warnings"] = r.warnings;
    assets.push_back(a);
  }
  out["assets"] = assets;
  out["mean"] = means_json(report.mean);
  json cats = json::object();
  for (const auto& [name, m] : report.by_category) cats[name] = means_json(m);
  out["by_category"] = cats;
  return out.dump(2) + "\n";
}

std::string report_text(const BatchReport& report) {
  std::vector<std::array<std::string, 6>> rows;
  rows.push_back({"asset", "Type", "Axis", "Origin", "IoU", "CD"});
  for (const auto& r : report.assets) {
    rows.push_back({r.name, fixed(r.type_accuracy), fixed(r.axis_error), fixed(r.origin_error), fixed(r.iou),
                    fixed(r.chamfer)});
  }
  for (const auto& [name, m] : report.by_category) {
    rows.push_back({"[" + name + "]", fixed(m.type_accuracy), fixed(m.axis_error), fixed(m.origin_error), fixed(m.iou),
                    fixed(m.chamfer)});
  }
  const auto& m = report.mean;
  rows.push_back({"mean", fixed(m.type_accuracy), fixed(m.axis_error), fixed(m.origin_error), fixed(m.iou),
                  fixed(m.chamfer)});
  std::array<std::size_t, 6> width{};
  for (const auto& row : rows)
    for (std::size_t c = 0; c < 6; ++c) width[c] = std::max(width[c], row[c].size());
  std::string out = "# axis in radians, origin in meters, CD in normalized units\n";
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < 6; ++c) {
      const std::string& cell = row[c];
      if (c == 0) {
        out += cell + std::string(width[c] - cell.size(), ' ');
      } else {
        out += "  " + std::string(width[c] - cell.size(), ' ') + cell;
      }
    }
    out += "\n";
  }
  return out;
}

}  // namespace artkit
