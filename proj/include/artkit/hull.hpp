#pragma once

#include "artkit/mesh.hpp"

#include <vector>

namespace artkit {

/// Outward-oriented triangles over the input points. Empty when the points are
/// coplanar (or fewer than four distinct points).
struct ConvexHull {
  std::vector<Vec3> points;
  std::vector<Face> faces;

  double volume() const;
};

ConvexHull convex_hull(const std::vector<Vec3>& points);

}  // namespace artkit
