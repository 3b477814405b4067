#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "nbode/types.hpp"

namespace nbode {

/// Static KD-tree for exact fixed-radius and annulus queries in Euclidean space.
///
/// Points are copied into tree order at construction. Query results report the
/// caller's ids (by default the row index) in unspecified order. A point at
/// squared distance q2 from the query belongs to the annulus [r_min, r_max]
/// iff r_min^2 <= q2 <= r_max^2, with q2 summed dimension by dimension.
class KdTree {
 public:
  explicit KdTree(const RowMat& points, int leaf_size = 16);
  // Index only the given rows; results report those row numbers.
  KdTree(const RowMat& points, std::span<const std::uint32_t> rows, int leaf_size = 16);

  std::size_t size() const { return ids_.size(); }
  int dim() const { return dim_; }

  std::vector<std::uint32_t> query_radius(std::span<const double> q, double r) const;
  void query_annulus(std::span<const double> q, double r_min, double r_max,
                     std::vector<std::uint32_t>& out) const;
  std::size_t count_annulus(std::span<const double> q, double r_min, double r_max) const;

 private:
  struct Node {
    std::uint32_t begin, end;
    std::int32_t left = -1, right = -1;
  };

  std::int32_t build(std::uint32_t begin, std::uint32_t end, int leaf_size);
  double min_dist2(const Node& node, const double* q) const;
  double max_dist2(const Node& node, const double* q) const;
  template <class Visit, class Bulk>
  void walk(const double* q, double lo2, double hi2, Visit&& visit, Bulk&& bulk) const;

  int dim_ = 0;
  std::vector<double> coords_;      // tree order, row-major
  std::vector<std::uint32_t> ids_;  // tree order -> caller id
  std::vector<Node> nodes_;
  std::vector<double> box_lo_, box_hi_;  // per node bounding box
};

double squared_distance(const double* a, const double* b, int d);

}  // namespace nbode
