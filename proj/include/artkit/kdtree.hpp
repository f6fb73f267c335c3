#pragma once

#include "artkit/mesh.hpp"

#include <cstddef>
#include <vector>

namespace artkit {

/// Static 3-d tree for exact nearest-neighbor queries.
class KdTree {
 public:
  struct Hit {
    std::size_t index = 0;
    double squared_distance = 0.0;
  };

  KdTree() = default;
  explicit KdTree(std::vector<Vec3> points);

  bool empty() const { return points_.empty(); }
  std::size_t size() const { return points_.size(); }
  const std::vector<Vec3>& points() const { return points_; }

  /// Exact nearest point; ties resolve to the lowest point index.
  Hit nearest(const Vec3& query) const;

 private:
  struct Node {
    int axis = -1;             // -1 for leaf
    double split = 0.0;
    int left = -1;
    int right = -1;
    std::size_t begin = 0;     // leaf range into order_
    std::size_t end = 0;
  };

  int build(std::size_t begin, std::size_t end, int depth);
  void search(int node, const Vec3& query, Hit& best) const;

  std::vector<Vec3> points_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
};

}  // namespace artkit
