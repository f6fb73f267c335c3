#include "artkit/segmentation.hpp"

#include "artkit/error.hpp"
#include "artkit/kdtree.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>

namespace artkit {

SeedSet extract_seeds(const std::map<int, OccupancyGrid>& part_grids, const NormalizationTransform& transform) {
  SeedSet seeds;
  const OccupancyGrid* first = nullptr;
  for (const auto& [id, grid] : part_grids) {
    if (first && !(grid.dims() == first->dims())) {
      throw Error(ErrorCode::ResolutionMismatch, "part " + std::to_string(id) + " grid resolution differs");
    }
    first = &grid;
    auto& pts = seeds[id];
    for (const auto& c : grid.occupied_cells()) pts.push_back(transform.invert(grid.cell_center(c)));
    if (pts.empty()) throw Error(ErrorCode::EmptyPart, "part " + std::to_string(id) + " has no occupied cells");
  }
  return seeds;
}

double default_sigma(const Mesh& mesh) { return 0.05 * bounding_box(mesh).extent().norm(); }

VertexProbabilities init_probabilities(const Mesh& mesh, const SeedSet& seeds, double sigma) {
  if (!(sigma > 0.0)) throw Error(ErrorCode::InvalidArgument, "sigma must be positive");
  if (seeds.empty()) throw Error(ErrorCode::InvalidArgument, "at least one part is required");
  VertexProbabilities p;
  const auto nv = static_cast<Eigen::Index>(mesh.vertices.size());
  p.values.resize(nv, static_cast<Eigen::Index>(seeds.size()));
  // Log-domain kernel so that vertices far from every seed still normalize.
  Eigen::MatrixXd log_k(nv, static_cast<Eigen::Index>(seeds.size()));
  Eigen::Index col = 0;
  for (const auto& [id, pts] : seeds) {
    if (pts.empty()) throw Error(ErrorCode::EmptyPart, "part " + std::to_string(id) + " has no seeds");
    p.part_ids.push_back(id);
    const KdTree tree(pts);
    for (Eigen::Index v = 0; v < nv; ++v) {
      log_k(v, col) = -tree.nearest(mesh.vertices[v]).squared_distance / (2.0 * sigma * sigma);
    }
    ++col;
  }
  for (Eigen::Index v = 0; v < nv; ++v) {
    const double top = log_k.row(v).maxCoeff();
    p.values.row(v) = (log_k.row(v).array() - top).exp();
    p.values.row(v) /= p.values.row(v).sum();
  }
  return p;
}

std::vector<std::vector<int>> vertex_neighbors(const Mesh& mesh) {
  std::vector<std::vector<int>> adj(mesh.vertices.size());
  for (const auto& f : mesh.faces) {
    for (int k = 0; k < 3; ++k) {
      adj[f[k]].push_back(f[(k + 1) % 3]);
      adj[f[k]].push_back(f[(k + 2) % 3]);
    }
  }
  for (auto& n : adj) {
    std::sort(n.begin(), n.end());
    n.erase(std::unique(n.begin(), n.end()), n.end());
  }
  return adj;
}

VertexProbabilities smooth_probabilities(const VertexProbabilities& p, const Mesh& mesh, double alpha,
                                         int iterations) {
  return smooth_probabilities(p, vertex_neighbors(mesh), alpha, iterations);
}

VertexProbabilities smooth_probabilities(const VertexProbabilities& p, const std::vector<std::vector<int>>& adj,
                                         double alpha, int iterations) {
  if (alpha < 0.0 || alpha > 1.0) throw Error(ErrorCode::InvalidArgument, "alpha must lie in [0, 1]");
  if (iterations < 0) throw Error(ErrorCode::InvalidArgument, "iterations must be non-negative");
  if (static_cast<std::size_t>(p.values.rows()) != adj.size()) {
    throw Error(ErrorCode::DimensionMismatch, "probability rows do not match vertex count");
  }
  VertexProbabilities cur = p;
  Eigen::MatrixXd next(p.values.rows(), p.values.cols());
  for (int it = 0; it < iterations; ++it) {
    for (Eigen::Index v = 0; v < cur.values.rows(); ++v) {
      const auto& n = adj[static_cast<std::size_t>(v)];
      Eigen::RowVectorXd avg;
      if (n.empty()) {
        avg = cur.values.row(v);
      } else {
        avg = Eigen::RowVectorXd::Zero(cur.values.cols());
        for (int u : n) avg += cur.values.row(u);
        avg /= static_cast<double>(n.size());
      }
      next.row(v) = alpha * cur.values.row(v) + (1.0 - alpha) * avg;
      next.row(v) /= next.row(v).sum();
    }
    cur.values.swap(next);
  }
  return cur;
}

std::vector<int> vertex_labels(const VertexProbabilities& p) {
  std::vector<int> labels(static_cast<std::size_t>(p.values.rows()));
  for (Eigen::Index v = 0; v < p.values.rows(); ++v) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < p.values.cols(); ++c) {
      // part_ids ascend, so strict > keeps the lowest id on ties
      if (p.values(v, c) > p.values(v, best)) best = c;
    }
    labels[static_cast<std::size_t>(v)] = p.part_ids[static_cast<std::size_t>(best)];
  }
  return labels;
}

std::vector<int> label_faces(const VertexProbabilities& p, const Mesh& mesh) {
  if (static_cast<std::size_t>(p.values.rows()) != mesh.vertices.size()) {
    throw Error(ErrorCode::DimensionMismatch, "probability rows do not match vertex count");
  }
  const auto vl = vertex_labels(p);
  std::vector<int> out;
  out.reserve(mesh.faces.size());
  for (const auto& f : mesh.faces) {
    const int a = vl[f[0]], b = vl[f[1]], c = vl[f[2]];
    if (a == b || a == c) {
      out.push_back(a);
    } else if (b == c) {
      out.push_back(b);
    } else {
      out.push_back(std::min({a, b, c}));
    }
  }
  return out;
}

std::map<int, Mesh> split_mesh(const Mesh& mesh, const std::vector<int>& labels) {
  if (labels.size() != mesh.faces.size()) {
    throw Error(ErrorCode::DimensionMismatch, "label count does not match face count");
  }
  std::map<int, Mesh> parts;
  std::map<int, std::vector<int>> vertex_maps;
  std::map<int, std::vector<int>> uv_maps;
  std::map<int, std::vector<int>> material_maps;
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    const int label = labels[f];
    Mesh& part = parts[label];
    auto& vmap = vertex_maps[label];
    if (vmap.empty()) {
      vmap.assign(mesh.vertices.size(), -1);
      part.material_library = mesh.material_library;
    }
    Face nf{};
    for (int k = 0; k < 3; ++k) {
      int& slot = vmap[mesh.faces[f][k]];
      if (slot < 0) {
        slot = static_cast<int>(part.vertices.size());
        part.vertices.push_back(mesh.vertices[mesh.faces[f][k]]);
      }
      nf[k] = slot;
    }
    part.faces.push_back(nf);
    if (mesh.has_uvs()) {
      auto& umap = uv_maps[label];
      if (umap.empty()) umap.assign(mesh.uvs.size(), -1);
      Face nu{};
      for (int k = 0; k < 3; ++k) {
        int& slot = umap[mesh.face_uvs[f][k]];
        if (slot < 0) {
          slot = static_cast<int>(part.uvs.size());
          part.uvs.push_back(mesh.uvs[mesh.face_uvs[f][k]]);
        }
        nu[k] = slot;
      }
      part.face_uvs.push_back(nu);
    }
    if (mesh.has_materials()) {
      auto& mmap = material_maps[label];
      if (mmap.empty()) mmap.assign(mesh.materials.size(), -1);
      const int src = mesh.face_materials[f];
      int dst = -1;
      if (src >= 0) {
        if (mmap[src] < 0) {
          mmap[src] = static_cast<int>(part.materials.size());
          part.materials.push_back(mesh.materials[src]);
        }
        dst = mmap[src];
      }
      part.face_materials.push_back(dst);
    }
  }
  return parts;
}

Segmentation segment_mesh(const Mesh& mesh, const SeedSet& seeds, const SegmentationParams& params) {
  validate_mesh(mesh);
  const double sigma = params.sigma > 0.0 ? params.sigma : default_sigma(mesh);
  const auto p0 = init_probabilities(mesh, seeds, sigma);
  const auto p = smooth_probabilities(p0, mesh, params.alpha, params.iterations);
  Segmentation seg;
  seg.face_labels = label_faces(p, mesh);
  seg.parts = split_mesh(mesh, seg.face_labels);
  for (const auto& [id, pts] : seeds) seg.seed_counts[id] = pts.size();
  return seg;
}

std::string format_labels(const std::vector<int>& labels) {
  std::string out;
  for (int l : labels) out += std::to_string(l) + "\n";
  return out;
}

void write_segmentation(const Segmentation& seg, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::ordered_json manifest = nlohmann::ordered_json::object();
  for (const auto& [id, part] : seg.parts) {
    const std::string file = "part_" + std::to_string(id) + ".obj";
    write_obj(part, dir / file);
    const auto it = seg.seed_counts.find(id);
    manifest[std::to_string(id)] = {{"file", file},
                                    {"face_count", part.faces.size()},
                                    {"seed_count", it == seg.seed_counts.end() ? 0 : it->second}};
  }
  std::ofstream(dir / "manifest.json") << manifest.dump(2) << "\n";
  std::ofstream labels(dir / "labels.txt");
  labels << format_labels(seg.face_labels);
  if (!labels) throw Error(ErrorCode::Io, "cannot write " + (dir / "labels.txt").string());
}

}  // namespace artkit
