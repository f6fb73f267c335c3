#pragma once

#include "artkit/mesh.hpp"
#include "artkit/voxel_grid.hpp"

#include <Eigen/Core>

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace artkit {

/// Seed points per part id, in the mesh frame.
using SeedSet = std::map<int, std::vector<Vec3>>;

/// Rows are vertices, columns follow `part_ids`.
struct VertexProbabilities {
  std::vector<int> part_ids;
  Eigen::MatrixXd values;
};

/// Occupied cell centers mapped back through the inverse normalization.
/// Throws EmptyPart for a grid without occupied cells.
SeedSet extract_seeds(const std::map<int, OccupancyGrid>& part_grids, const NormalizationTransform& transform);

/// 0.05 x bounding-box diagonal.
double default_sigma(const Mesh& mesh);

/// Gaussian kernel on the distance to the nearest seed of each part,
/// normalized per vertex.
VertexProbabilities init_probabilities(const Mesh& mesh, const SeedSet& seeds, double sigma);

/// Unweighted 1-ring neighbors per vertex, sorted and unique.
std::vector<std::vector<int>> vertex_neighbors(const Mesh& mesh);

/// P <- alpha P + (1 - alpha) A P with A the row-normalized adjacency. Vertices
/// without neighbors keep their own row.
VertexProbabilities smooth_probabilities(const VertexProbabilities& p, const Mesh& mesh, double alpha = 0.5,
                                         int iterations = 10);
VertexProbabilities smooth_probabilities(const VertexProbabilities& p, const std::vector<std::vector<int>>& neighbors,
                                         double alpha, int iterations);

/// Per-vertex argmax (ties to the lowest part id).
std::vector<int> vertex_labels(const VertexProbabilities& p);

/// Majority vote of the three vertex labels; a three-way split takes the lowest id.
std::vector<int> label_faces(const VertexProbabilities& p, const Mesh& mesh);

/// Faces grouped by label, vertices re-indexed in first-use order; UVs and
/// materials are carried over.
std::map<int, Mesh> split_mesh(const Mesh& mesh, const std::vector<int>& labels);

struct SegmentationParams {
  double sigma = 0.0;  // <= 0 means default_sigma(mesh)
  double alpha = 0.5;
  int iterations = 10;
};

struct Segmentation {
  std::vector<int> face_labels;
  std::map<int, Mesh> parts;
  std::map<int, std::size_t> seed_counts;
};

Segmentation segment_mesh(const Mesh& mesh, const SeedSet& seeds, const SegmentationParams& params = {});

/// One label per line.
std::string format_labels(const std::vector<int>& labels);

/// part_<id>.obj per part plus manifest.json and labels.txt in `dir`.
void write_segmentation(const Segmentation& seg, const std::filesystem::path& dir);

}  // namespace artkit
