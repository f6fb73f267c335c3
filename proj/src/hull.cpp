#include "artkit/hull.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <utility>

namespace artkit {

namespace {

double orient(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& p) {
  return (b - a).cross(c - a).dot(p - a);
}

}  // namespace

double ConvexHull::volume() const {
  if (faces.empty()) return 0.0;
  const Vec3 ref = points[faces[0][0]];
  double v = 0.0;
  for (const auto& f : faces) v += orient(ref, points[f[0]], points[f[1]], points[f[2]]);
  return v / 6.0;
}

// Incremental construction; quadratic but plenty for part meshes.
ConvexHull convex_hull(const std::vector<Vec3>& input) {
  ConvexHull hull;
  hull.points = input;
  const auto& pts = hull.points;
  if (pts.size() < 4) return hull;

  Aabb box;
  for (const auto& p : pts) box.extend(p);
  const double diag = box.extent().norm();
  if (diag == 0.0) return hull;
  const double eps = 1e-12 * diag * diag * diag;

  const int n = static_cast<int>(pts.size());
  int i0 = 0;
  for (int i = 1; i < n; ++i)
    if (pts[i].x() < pts[i0].x()) i0 = i;
  int i1 = i0;
  for (int i = 0; i < n; ++i)
    if ((pts[i] - pts[i0]).squaredNorm() > (pts[i1] - pts[i0]).squaredNorm()) i1 = i;
  int i2 = i0;
  double best = 0.0;
  for (int i = 0; i < n; ++i) {
    const double d = (pts[i1] - pts[i0]).cross(pts[i] - pts[i0]).squaredNorm();
    if (d > best) best = d, i2 = i;
  }
  int i3 = i0;
  best = 0.0;
  for (int i = 0; i < n; ++i) {
    const double d = std::abs(orient(pts[i0], pts[i1], pts[i2], pts[i]));
    if (d > best) best = d, i3 = i;
  }
  if (best <= eps) return hull;
  if (orient(pts[i0], pts[i1], pts[i2], pts[i3]) > 0) std::swap(i1, i2);

  std::vector<Face> faces = {{i0, i1, i2}, {i0, i3, i1}, {i1, i3, i2}, {i2, i3, i0}};
  for (int p = 0; p < n; ++p) {
    if (p == i0 || p == i1 || p == i2 || p == i3) continue;
    std::vector<bool> visible(faces.size(), false);
    bool any = false;
    for (std::size_t f = 0; f < faces.size(); ++f) {
      if (orient(pts[faces[f][0]], pts[faces[f][1]], pts[faces[f][2]], pts[p]) > eps) visible[f] = any = true;
    }
    if (!any) continue;
    std::map<std::pair<int, int>, bool> edges;
    for (std::size_t f = 0; f < faces.size(); ++f) {
      if (!visible[f]) continue;
      for (int k = 0; k < 3; ++k) edges[{faces[f][k], faces[f][(k + 1) % 3]}] = true;
    }
    std::vector<Face> next;
    next.reserve(faces.size() + 8);
    for (std::size_t f = 0; f < faces.size(); ++f)
      if (!visible[f]) next.push_back(faces[f]);
    for (const auto& [e, unused] : edges) {
      (void)unused;
      if (!edges.count({e.second, e.first})) next.push_back({e.first, e.second, p});
    }
    faces = std::move(next);
  }
  hull.faces = std::move(faces);
  return hull;
}

}  // namespace artkit
